//! Output files of a run. Everything written here is byte-stable for a fixed
//! run: maps are ordered and floats go through one formatter.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::attacks::AttackReport;
use crate::config::ScenarioConfig;
use crate::metrics::{compute_metrics, Comparison, RunMetrics};
use crate::protocol::{Cause, ServerLedger};
use crate::sim::{AttackOutcome, RunOptions, RunOutput};
use crate::ARTIFACT_VERSION;

/// JSON schema of `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../schemas/report.schema.json");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything needed to repeat a run exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub config: ScenarioConfig,
    pub trace_receptions: bool,
    pub record_tracks: bool,
}

impl Manifest {
    pub fn new(config: &ScenarioConfig, opts: RunOptions) -> Self {
        Self {
            artifact_version: ARTIFACT_VERSION.to_string(),
            config: config.clone(),
            trace_receptions: opts.record_receptions,
            record_tracks: opts.record_trajectories,
        }
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            record_receptions: self.trace_receptions,
            record_trajectories: self.record_tracks,
            record_broadcasts: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub artifact_version: String,
    pub protocol: String,
    pub seed: u64,
    pub n_agents: usize,
    pub n_ticks: u64,
    pub step_seconds: u64,
    pub metrics: RunMetrics,
    pub server_ledger: ServerLedger,
    pub attack: Option<AttackReport>,
    pub manifest: String,
}

#[derive(Serialize)]
struct TimeseriesCsv {
    tick: u64,
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "E")]
    e: usize,
    #[serde(rename = "I")]
    i: usize,
    diagnosed_cum: usize,
    quarantined: usize,
}

#[derive(Serialize)]
struct NotificationCsv<'a> {
    tick: u64,
    agent_id: usize,
    protocol: &'a str,
    risk_score: f64,
    cause: &'a str,
    report_tick: u64,
}

#[derive(Serialize)]
struct ReceptionCsv {
    tick: u64,
    receiver_agent: usize,
    sender_eid_hex: String,
    rssi_db: f64,
}

#[derive(Serialize)]
struct TrackCsv {
    victim_agent: usize,
    key_day: u64,
    tick: u64,
    eid_hex: String,
    sniffer_x: f64,
    sniffer_y: f64,
}

#[derive(Serialize)]
struct AttributionCsv {
    station: usize,
    window_start_tick: u64,
    window_end_tick: u64,
    eid_hex: String,
    candidates: usize,
    victim_agent: usize,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut any = false;
    for r in rows {
        w.serialize(r)?;
        any = true;
    }
    if !any {
        // csv only writes headers with the first record
        drop(w);
        return Ok(());
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Attack summary for `attack_report.json`; `None` for clean runs.
pub fn attack_report(out: &RunOutput) -> Option<AttackReport> {
    let outcome = out.attack.as_ref()?;
    let mut r = AttackReport {
        attack_type: out.config.attack.kind.as_str().to_string(),
        attack_notifications: out.notifications.iter().filter(|n| n.cause != Cause::TrueContact).count(),
        oversight_alerts: out.central.as_ref().map_or(0, |c| c.alerts.len()),
        ..AttackReport::default()
    };
    match outcome {
        AttackOutcome::Sniffer(s) => {
            let mut route = BTreeMap::new();
            for v in &s.victims {
                r.track_coverage_per_victim.insert(v.agent.to_string(), v.coverage);
                route.insert(v.agent.to_string(), v.route_fraction);
            }
            r.reidentified_victims = s.victims.iter().filter(|v| v.matched_ticks > 0).count();
            r.details.insert("sniffers".into(), json!(s.sniffers.len()));
            r.details.insert("sniffer_range_m".into(), json!(s.range));
            r.details.insert("observations".into(), json!(s.observations));
            r.details.insert(
                "reconstructed_points".into(),
                json!(s.tracks.iter().map(|(_, t)| t.points.len()).sum::<usize>()),
            );
            r.details.insert("route_fraction_per_victim".into(), json!(route));
        }
        AttackOutcome::Relay(x) => {
            r.injected_receptions = x.injected;
            r.details.insert("captured_eids".into(), json!(x.captured.len()));
            r.details.insert("provenance".into(), json!(x.provenance));
            r.details.insert("relay_mode".into(), json!(out.config.attack.relay_mode));
            if let Some(c) = &out.central {
                r.details.insert("held_notifications".into(), json!(c.held_notifications));
                r.details.insert("stale_evidence".into(), json!(c.stale_evidence));
                r.details.insert("blacklisted_evidence".into(), json!(c.blacklisted_evidence));
            }
        }
        AttackOutcome::Sybil(x) => {
            let unique: std::collections::BTreeSet<usize> =
                x.attributions.iter().filter(|(_, a)| a.is_unique()).map(|(v, _)| v.0).collect();
            r.reidentified_victims = unique.len();
            r.details.insert("stations".into(), json!(x.stations.len()));
            r.details.insert("matched_windows".into(), json!(x.attributions.len()));
            r.details.insert(
                "unique_attributions".into(),
                json!(x.attributions.iter().filter(|(_, a)| a.is_unique()).count()),
            );
            r.details.insert(
                "ambiguous_attributions".into(),
                json!(x.attributions.iter().filter(|(_, a)| !a.is_unique()).count()),
            );
            if let Some(reg) = &x.registration {
                r.details.insert("accounts_granted".into(), json!(reg.granted));
                r.details.insert("accounts_denied_rate_limit".into(), json!(reg.denied_rate_limit));
                r.details.insert("accounts_denied_challenge".into(), json!(reg.denied_challenge));
            }
        }
    }
    Some(r)
}

pub fn summary(out: &RunOutput, metrics: RunMetrics) -> ReportSummary {
    ReportSummary {
        artifact_version: ARTIFACT_VERSION.to_string(),
        protocol: out.config.protocol.as_str().to_string(),
        seed: out.config.rng_seed,
        n_agents: out.config.n_agents,
        n_ticks: out.n_ticks,
        step_seconds: out.config.step_seconds,
        metrics,
        server_ledger: out.ledger,
        attack: attack_report(out),
        manifest: "manifest.json".to_string(),
    }
}

/// Writes every output of one run into `dir` (which must exist) and
/// returns the paths written, in order.
pub fn emit_report(out: &RunOutput, opts: RunOptions, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    let mut path = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };

    write_json(&path("manifest.json"), &Manifest::new(&out.config, opts))?;
    let report = summary(out, compute_metrics(out));
    write_json(&path("report.json"), &report)?;
    write_json(&path("server_ledger.json"), &out.ledger)?;

    write_csv(
        &path("timeseries.csv"),
        out.timeseries.iter().map(|r| TimeseriesCsv {
            tick: r.tick,
            s: r.susceptible,
            e: r.exposed,
            i: r.infectious,
            diagnosed_cum: r.diagnosed_cum,
            quarantined: r.quarantined,
        }),
    )?;
    write_csv_with_header(
        &path("notifications.csv"),
        "tick,agent_id,protocol,risk_score,cause,report_tick",
        out.notifications.iter().map(|n| NotificationCsv {
            tick: n.tick,
            agent_id: n.agent_id.0,
            protocol: n.protocol.as_str(),
            risk_score: n.risk_score,
            cause: n.cause.as_str(),
            report_tick: n.report_tick,
        }),
    )?;

    if let Some(rx) = &out.receptions {
        write_csv_with_header(
            &path("receptions.csv"),
            "tick,receiver_agent,sender_eid_hex,rssi_db",
            rx.iter().map(|r| ReceptionCsv {
                tick: r.tick,
                receiver_agent: r.receiver.0,
                sender_eid_hex: r.sender_eid.to_hex(),
                rssi_db: r.rssi_db,
            }),
        )?;
    }

    if let Some(a) = &report.attack {
        write_json(&path("attack_report.json"), a)?;
    }
    match &out.attack {
        Some(AttackOutcome::Sniffer(s)) => write_csv_with_header(
            &path("tracks.csv"),
            "victim_agent,key_day,tick,eid_hex,sniffer_x,sniffer_y",
            s.tracks.iter().flat_map(|(agent, t)| {
                t.points.iter().map(move |p| TrackCsv {
                    victim_agent: agent.0,
                    key_day: t.key.day_index,
                    tick: p.tick,
                    eid_hex: p.eid.to_hex(),
                    sniffer_x: p.sniffer_pos.x,
                    sniffer_y: p.sniffer_pos.y,
                })
            }),
        )?,
        Some(AttackOutcome::Relay(r)) => {
            let mut text: String = r.captured.iter().map(|e| e.to_hex() + "\n").collect();
            if text.is_empty() {
                text.push('\n');
            }
            fs::write(path("captured_eids.txt"), text)?;
        }
        Some(AttackOutcome::Sybil(s)) => write_csv_with_header(
            &path("attributions.csv"),
            "station,window_start_tick,window_end_tick,eid_hex,candidates,victim_agent",
            s.attributions.iter().map(|(v, a)| AttributionCsv {
                station: a.station,
                window_start_tick: a.window_start,
                window_end_tick: a.window_end,
                eid_hex: a.eid.to_hex(),
                candidates: a.candidates,
                victim_agent: v.0,
            }),
        )?,
        None => {}
    }
    Ok(written)
}

/// Like [`write_csv`] but still writes the header for an empty table.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &str, rows: impl IntoIterator<Item = T>) -> Result<(), ReportError> {
    let mut rows = rows.into_iter().peekable();
    if rows.peek().is_none() {
        fs::write(path, format!("{header}\n"))?;
        return Ok(());
    }
    write_csv(path, rows)
}

/// Writes `comparison.csv`, one row per protocol.
pub fn emit_comparison(cmp: &Comparison, path: &Path) -> Result<(), ReportError> {
    write_csv(path, cmp.rows.iter())
}
