//! BLE-like broadcast channel: log-distance path loss with gaussian
//! shadowing, a hard range cut-off and a receiver sensitivity floor.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Tick;
use crate::crypto::EphemeralId;
use crate::geometry::{Point, SpatialGrid};
use crate::world::AgentId;

/// Distance estimates never go below this.
pub const MIN_ESTIMATED_DISTANCE_M: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    /// 50 m outdoors, 25 m indoors.
    pub max_range_m: f64,
    pub rssi_at_1m_db: f64,
    pub path_loss_exponent: f64,
    pub noise_sigma_db: f64,
    pub detection_floor_db: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            max_range_m: 50.0,
            rssi_at_1m_db: -55.0,
            path_loss_exponent: 2.0,
            noise_sigma_db: 3.0,
            detection_floor_db: -95.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
}

/// Ground-truth origin of a reception. Carried for scoring only; protocol
/// logic never inspects it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Genuine,
    Relay,
    Replay,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reception {
    pub receiver: AgentId,
    pub sender_eid: EphemeralId,
    pub tick: Tick,
    pub rssi_db: f64,
    pub provenance: Provenance,
}

/// One app-carrying device advertising its current identifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Broadcaster {
    pub agent: AgentId,
    pub position: Point,
    pub eid: EphemeralId,
}

/// Received level at distance `d` for a standard-normal `noise_draw`.
pub fn rssi_from_distance(d: f64, params: &RadioParams, noise_draw: f64) -> Result<f64, RadioError> {
    if d.is_nan() || d <= 0.0 {
        return Err(RadioError::NonPositiveDistance(d));
    }
    Ok(mean_rssi(d, params) + params.noise_sigma_db * noise_draw)
}

fn mean_rssi(d: f64, params: &RadioParams) -> f64 {
    params.rssi_at_1m_db - 10.0 * params.path_loss_exponent * d.log10()
}

/// Inverse of the noiseless path-loss model, clamped below at
/// [`MIN_ESTIMATED_DISTANCE_M`].
pub fn estimate_distance(rssi_db: f64, params: &RadioParams) -> f64 {
    let d = 10f64.powf((params.rssi_at_1m_db - rssi_db) / (10.0 * params.path_loss_exponent));
    d.max(MIN_ESTIMATED_DISTANCE_M)
}

/// Everyone hears everyone within range whose sampled level clears the floor.
///
/// Output is sorted by (receiver, sender agent) and does not depend on the
/// order of `broadcasters`: noise is drawn in that canonical order.
/// Co-located devices are treated as [`MIN_ESTIMATED_DISTANCE_M`] apart.
pub fn broadcast_round<R: Rng + ?Sized>(
    broadcasters: &[Broadcaster],
    params: &RadioParams,
    tick: Tick,
    rng: &mut R,
) -> Vec<Reception> {
    let mut sorted: Vec<Broadcaster> = broadcasters.to_vec();
    sorted.sort_by_key(|b| b.agent);
    if sorted.len() < 2 {
        return Vec::new();
    }
    let (max_x, max_y) = sorted
        .iter()
        .fold((0.0f64, 0.0f64), |(x, y), b| (x.max(b.position.x), y.max(b.position.y)));
    let grid = SpatialGrid::build(
        sorted.iter().map(|b| b.position),
        max_x + 1.0,
        max_y + 1.0,
        params.max_range_m,
    );
    let mut out = Vec::new();
    for (ri, rx) in sorted.iter().enumerate() {
        for si in grid.candidates(rx.position, params.max_range_m) {
            if si == ri {
                continue;
            }
            let tx = &sorted[si];
            let d = rx.position.distance(&tx.position);
            if d > params.max_range_m {
                continue;
            }
            let noise: f64 = if params.noise_sigma_db > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            let rssi = mean_rssi(d.max(MIN_ESTIMATED_DISTANCE_M), params) + params.noise_sigma_db * noise;
            if rssi >= params.detection_floor_db {
                out.push(Reception {
                    receiver: rx.agent,
                    sender_eid: tx.eid,
                    tick,
                    rssi_db: rssi,
                    provenance: Provenance::Genuine,
                });
            }
        }
    }
    out
}
