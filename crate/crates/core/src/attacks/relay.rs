//! Relay/replay attack: identifiers captured near one place are re-broadcast
//! near a target after a delay. Captured bytes are replayed verbatim; the
//! attacker forges nothing.
//!
//! The relay runs both ways. Source identifiers reach the targets (what
//! on-device matching sees) and target identifiers reach the source (what a
//! server sees when the source uploads its received list).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_distr::StandardNormal;

use super::{AttackConfig, RelayMode};
use crate::clock::{Tick, INTERVAL_SECONDS};
use crate::crypto::EphemeralId;
use crate::geometry::Point;
use crate::radio::{rssi_from_distance, Broadcaster, Provenance, RadioParams, Reception};
use crate::world::AgentId;

#[derive(Debug)]
pub struct RelayAttack {
    cfg: AttackConfig,
    radio: RadioParams,
    provenance: Provenance,
    targets: BTreeSet<AgentId>,
    forward: VecDeque<(Tick, Vec<EphemeralId>)>,
    reverse: VecDeque<(Tick, Vec<EphemeralId>)>,
    captured: BTreeSet<EphemeralId>,
    injected: usize,
}

impl RelayAttack {
    pub fn new(cfg: &AttackConfig, radio: &RadioParams, step_seconds: u64) -> Self {
        // Anything delayed past one rotation period is a replay.
        let provenance = if cfg.relay_latency_ticks * step_seconds < INTERVAL_SECONDS {
            Provenance::Relay
        } else {
            Provenance::Replay
        };
        Self {
            cfg: cfg.clone(),
            radio: radio.clone(),
            provenance,
            targets: cfg.relay_targets.iter().map(|&i| AgentId(i)).collect(),
            forward: VecDeque::new(),
            reverse: VecDeque::new(),
            captured: BTreeSet::new(),
            injected: 0,
        }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    fn in_capture_zone(&self, agent: AgentId, p: Point) -> bool {
        match self.cfg.relay_follow_agent {
            Some(f) => agent.0 == f,
            None => {
                !self.targets.contains(&agent)
                    && p.distance(&Point::new(self.cfg.relay_capture_x, self.cfg.relay_capture_y))
                        <= self.cfg.relay_capture_radius_m
            }
        }
    }

    fn target_reachable(&self, p: Point) -> bool {
        match self.cfg.relay_mode {
            RelayMode::RemoteSatellite => true,
            RelayMode::CloseByRelay => {
                p.distance(&Point::new(self.cfg.relay_replay_x, self.cfg.relay_replay_y)) <= self.cfg.relay_replay_radius_m
            }
        }
    }

    /// Captures this tick's identifiers and releases whatever is due.
    /// `broadcasters` are the adopters on air this tick.
    pub fn step<R: Rng + ?Sized>(&mut self, tick: Tick, broadcasters: &[Broadcaster], rng: &mut R) -> Vec<Reception> {
        let fwd: Vec<EphemeralId> =
            broadcasters.iter().filter(|b| self.in_capture_zone(b.agent, b.position)).map(|b| b.eid).collect();
        let rev: Vec<EphemeralId> =
            broadcasters.iter().filter(|b| self.targets.contains(&b.agent)).map(|b| b.eid).collect();
        self.captured.extend(fwd.iter().chain(rev.iter()).copied());
        if !fwd.is_empty() {
            self.forward.push_back((tick, fwd));
        }
        if !rev.is_empty() {
            self.reverse.push_back((tick, rev));
        }

        let latency = self.cfg.relay_latency_ticks;
        let positions: BTreeMap<AgentId, Point> = broadcasters.iter().map(|b| (b.agent, b.position)).collect();
        let mut deliveries: Vec<(AgentId, EphemeralId)> = Vec::new();
        while self.forward.front().is_some_and(|(t, _)| t + latency <= tick) {
            let (_, eids) = self.forward.pop_front().expect("checked front");
            for target in &self.targets {
                if positions.get(target).is_some_and(|p| self.target_reachable(*p)) {
                    deliveries.extend(eids.iter().map(|e| (*target, *e)));
                }
            }
        }
        while self.reverse.front().is_some_and(|(t, _)| t + latency <= tick) {
            let (_, eids) = self.reverse.pop_front().expect("checked front");
            for (agent, p) in &positions {
                if self.in_capture_zone(*agent, *p) {
                    deliveries.extend(eids.iter().map(|e| (*agent, *e)));
                }
            }
        }
        deliveries.sort();
        let mut out = Vec::with_capacity(deliveries.len());
        for (receiver, sender_eid) in deliveries {
            let noise: f64 = if self.radio.noise_sigma_db > 0.0 {
                self.radio.noise_sigma_db * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let rssi_db = rssi_from_distance(self.cfg.relay_distance_m, &self.radio, noise)
                .expect("relay distance validated positive");
            if rssi_db >= self.radio.detection_floor_db {
                out.push(Reception { receiver, sender_eid, tick, rssi_db, provenance: self.provenance });
            }
        }
        self.injected += out.len();
        out
    }

    /// Every identifier the relay ever carried, in either direction.
    pub fn captured_eids(&self) -> &BTreeSet<EphemeralId> {
        &self.captured
    }

    pub fn injected(&self) -> usize {
        self.injected
    }
}
