//! Shared protocol machinery: contact records, the risk score and
//! notifications. The two protocol families live in the submodules.

pub mod centralised;
pub mod decentralised;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{SimClock, Tick, INTERVAL_SECONDS};
use crate::config::ProtocolKind;
use crate::crypto::{EphemeralId, Timestamped};
use crate::radio::{estimate_distance, Provenance, RadioParams, Reception};
use crate::world::AgentId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeldPolicy {
    /// Deliver everything; the alert is informational.
    Release,
    /// Hold every notification of an alerting report for review.
    Suppress,
    /// Deliver up to the fan-out threshold, hold the excess.
    Cap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracingParams {
    /// Probability that a diagnosed adopter consents to upload.
    pub reporting_probability: f64,
    pub proximity_threshold_m: f64,
    pub exposure_minutes_threshold: f64,
    /// Centralised status poll period.
    pub poll_interval_s: u64,
    /// How long after its interval ends an identifier may still be matched.
    pub replay_tolerance_s: u64,
    /// Centralised oversight: notifications per report above which an alert
    /// is raised.
    pub fanout_threshold: usize,
    pub held_policy: HeldPolicy,
    pub rate_limit_per_source: u32,
    pub pow_difficulty_bits: u32,
    /// Hex identifiers excluded from matching in both modes.
    pub blacklist: Vec<String>,
}

impl Default for TracingParams {
    fn default() -> Self {
        Self {
            reporting_probability: 1.0,
            proximity_threshold_m: 2.0,
            exposure_minutes_threshold: 15.0,
            poll_interval_s: 3600,
            replay_tolerance_s: 7200,
            fanout_threshold: 100,
            held_policy: HeldPolicy::Suppress,
            rate_limit_per_source: 5,
            pow_difficulty_bits: 8,
            blacklist: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("agent {0} already reported a diagnosis")]
    DuplicateReport(AgentId),
    #[error("tick {0} is not a 24 h batch boundary")]
    NotBatchBoundary(Tick),
    #[error("pseudonym {0:?} already reported a diagnosis")]
    DuplicatePseudonymReport(centralised::Pseudonym),
    #[error("unknown pseudonym {0:?}")]
    UnknownPseudonym(centralised::Pseudonym),
    #[error("registration challenge failed")]
    ChallengeFailed,
    #[error("registration rate limit exceeded for source {0}")]
    RateLimited(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RssiSample {
    pub rssi_db: f64,
    pub tick: u32,
    pub provenance: Provenance,
}

/// Evidence of hearing one identifier during one receiver interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub eid: EphemeralId,
    pub first_tick: Tick,
    pub last_tick: Tick,
    pub samples: Vec<RssiSample>,
}

impl Timestamped for ContactRecord {
    fn timestamp(&self) -> Tick {
        self.last_tick
    }
}

/// A device's received-identifier store.
#[derive(Clone, Debug, Default)]
pub struct ContactLog {
    records: Vec<ContactRecord>,
    /// Records still open in `open_interval`, by identifier.
    open: HashMap<EphemeralId, usize>,
    open_interval: u64,
}

impl ContactLog {
    pub fn on_reception(&mut self, reception: &Reception, clock: &SimClock) {
        let interval = SimClock::at(reception.tick, clock.step_seconds()).interval_index();
        if interval != self.open_interval {
            self.open.clear();
            self.open_interval = interval;
        }
        let sample = RssiSample {
            tick: reception.tick as u32,
            rssi_db: reception.rssi_db,
            provenance: reception.provenance,
        };
        match self.open.get(&reception.sender_eid) {
            Some(&i) => {
                let rec = &mut self.records[i];
                rec.last_tick = rec.last_tick.max(reception.tick);
                rec.samples.push(sample);
            }
            None => {
                self.open.insert(reception.sender_eid, self.records.len());
                self.records.push(ContactRecord {
                    eid: reception.sender_eid,
                    first_tick: reception.tick,
                    last_tick: reception.tick,
                    samples: vec![sample],
                });
            }
        }
    }

    pub fn records(&self) -> &[ContactRecord] {
        &self.records
    }

    pub fn prune(&mut self, clock: &SimClock) {
        let records = std::mem::take(&mut self.records);
        self.records = crate::crypto::retention_prune(records, clock);
        self.open.clear();
        let step = clock.step_seconds();
        for (i, r) in self.records.iter().enumerate() {
            if SimClock::at(r.first_tick, step).interval_index() == self.open_interval {
                self.open.insert(r.eid, i);
            }
        }
    }
}

/// Everything needed to turn contact records into minutes of exposure.
#[derive(Clone, Debug)]
pub struct RiskContext {
    pub radio: RadioParams,
    pub proximity_threshold_m: f64,
    pub exposure_minutes_threshold: f64,
    pub step_seconds: u64,
}

impl RiskContext {
    fn near(&self, sample: &RssiSample) -> bool {
        // Relative slack so that a noiseless round trip of exactly the
        // threshold distance still counts.
        estimate_distance(sample.rssi_db, &self.radio) <= self.proximity_threshold_m * (1.0 + 1e-9)
    }

    fn minutes_per_sample(&self) -> f64 {
        self.step_seconds as f64 / 60.0
    }
}

/// Minutes of matched contact whose estimated distance is within the
/// proximity threshold. One sample stands for one tick of contact.
pub fn compute_risk(records: &[&ContactRecord], ctx: &RiskContext) -> f64 {
    let n = records
        .iter()
        .flat_map(|r| r.samples.iter())
        .filter(|s| ctx.near(s))
        .count();
    n as f64 * ctx.minutes_per_sample()
}

pub fn notifies(risk: f64, ctx: &RiskContext) -> bool {
    risk >= ctx.exposure_minutes_threshold
}

/// Ground-truth origin of a notification; metrics only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    TrueContact,
    RelayAttack,
    ReplayAttack,
}

impl Cause {
    pub fn as_str(&self) -> &'static str {
        match self {
            Cause::TrueContact => "true_contact",
            Cause::RelayAttack => "relay_attack",
            Cause::ReplayAttack => "replay_attack",
        }
    }
}

/// Running risk split by provenance. Protocol decisions only ever read
/// [`RiskAccumulator::total`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RiskAccumulator {
    genuine: f64,
    relay: f64,
    replay: f64,
    latest_report: Tick,
}

impl RiskAccumulator {
    pub fn add_record(&mut self, record: &ContactRecord, ctx: &RiskContext, report_tick: Tick) {
        let m = ctx.minutes_per_sample();
        let mut any = false;
        for s in record.samples.iter().filter(|s| ctx.near(s)) {
            any = true;
            match s.provenance {
                Provenance::Genuine => self.genuine += m,
                Provenance::Relay => self.relay += m,
                Provenance::Replay => self.replay += m,
            }
        }
        if any {
            self.latest_report = self.latest_report.max(report_tick);
        }
    }

    pub fn total(&self) -> f64 {
        self.genuine + self.relay + self.replay
    }

    pub fn absorb(&mut self, other: &RiskAccumulator) {
        self.genuine += other.genuine;
        self.relay += other.relay;
        self.replay += other.replay;
        self.latest_report = self.latest_report.max(other.latest_report);
    }

    fn cause(&self, ctx: &RiskContext) -> Cause {
        if self.genuine >= ctx.exposure_minutes_threshold || (self.relay == 0.0 && self.replay == 0.0) {
            Cause::TrueContact
        } else if self.relay >= self.replay {
            Cause::RelayAttack
        } else {
            Cause::ReplayAttack
        }
    }

    /// If the threshold is met, returns (risk, cause, report tick) and resets.
    pub fn fire(&mut self, ctx: &RiskContext) -> Option<(f64, Cause, Tick)> {
        let risk = self.total();
        if !notifies(risk, ctx) {
            return None;
        }
        let out = (risk, self.cause(ctx), self.latest_report);
        *self = Self::default();
        Some(out)
    }
}

/// The protocol's output to a user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExposureNotification {
    pub agent_id: AgentId,
    pub tick: Tick,
    pub protocol: ProtocolKind,
    pub risk_score: f64,
    /// Metrics only.
    pub cause: Cause,
    /// Server timestamp of the diagnosis report that completed the exposure.
    pub report_tick: Tick,
}

/// Whether a record first heard at `heard_tick` is consistent with an
/// identifier whose interval starts at `interval_start_s`.
pub fn within_validity(interval_start_s: u64, heard_tick: Tick, step_seconds: u64, tolerance_s: u64) -> bool {
    let heard = heard_tick * step_seconds;
    heard >= interval_start_s && heard < interval_start_s + INTERVAL_SECONDS + tolerance_s
}

/// Server-knowledge ledger: what each server could learn, counted from its
/// actual state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerLedger {
    pub health_status_entries: usize,
    pub social_graph_edges: usize,
    pub location_observations: usize,
}
