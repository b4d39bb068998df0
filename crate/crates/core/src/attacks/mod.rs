//! The three attack procedures: a passive sniffer grid, identifier
//! relay/replay, and sybil re-identification. Attacks read world state and
//! inject receptions at fixed hook points of the tick loop; they never touch
//! health states directly.

pub mod relay;
pub mod sniffer;
pub mod sybil;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    Sniffer,
    Relay,
    Sybil,
}

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Sniffer => "sniffer",
            AttackKind::Relay => "relay",
            AttackKind::Sybil => "sybil",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayMode {
    /// Replays only reach targets standing inside the replay zone.
    #[default]
    CloseByRelay,
    /// Replays reach targets wherever they are.
    RemoteSatellite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,

    pub sniffer_rows: usize,
    pub sniffer_cols: usize,
    /// Defaults to the radio range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sniffer_range_m: Option<f64>,

    pub relay_mode: RelayMode,
    pub relay_capture_x: f64,
    pub relay_capture_y: f64,
    pub relay_capture_radius_m: f64,
    /// Eavesdrop on this one agent wherever it goes instead of a fixed zone.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relay_follow_agent: Option<usize>,
    pub relay_targets: Vec<usize>,
    pub relay_latency_ticks: u64,
    /// Apparent distance of replayed signals.
    pub relay_distance_m: f64,
    pub relay_replay_x: f64,
    pub relay_replay_y: f64,
    pub relay_replay_radius_m: f64,

    pub sybil_rows: usize,
    pub sybil_cols: usize,
    pub sybil_encounter_radius_m: f64,
    pub sybil_bucket_seconds: u64,
    /// Centralised mode: registrations attempted from one source.
    pub sybil_accounts: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            sniffer_rows: 20,
            sniffer_cols: 20,
            sniffer_range_m: None,
            relay_mode: RelayMode::CloseByRelay,
            relay_capture_x: 0.0,
            relay_capture_y: 0.0,
            relay_capture_radius_m: 5.0,
            relay_follow_agent: None,
            relay_targets: Vec::new(),
            relay_latency_ticks: 1,
            relay_distance_m: 1.0,
            relay_replay_x: 0.0,
            relay_replay_y: 0.0,
            relay_replay_radius_m: 50.0,
            sybil_rows: 2,
            sybil_cols: 2,
            sybil_encounter_radius_m: 5.0,
            sybil_bucket_seconds: 900,
            sybil_accounts: 100,
        }
    }
}

/// Cell centres of a `rows x cols` grid laid over the world.
pub fn grid_positions(rows: usize, cols: usize, width: f64, height: f64) -> Vec<crate::geometry::Point> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(crate::geometry::Point::new(
                (c as f64 + 0.5) * width / cols as f64,
                (r as f64 + 0.5) * height / rows as f64,
            ));
        }
    }
    out
}

/// Written as `attack_report.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub attack_type: String,
    pub injected_receptions: usize,
    pub attack_notifications: usize,
    pub oversight_alerts: usize,
    pub reidentified_victims: usize,
    /// Agent id -> fraction of in-range ticks recovered from published keys.
    pub track_coverage_per_victim: BTreeMap<String, f64>,
    pub details: BTreeMap<String, serde_json::Value>,
}
