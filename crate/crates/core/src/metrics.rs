//! Per-run metrics and the paired protocol comparison. Everything here is a
//! pure function of a [`RunOutput`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{SimClock, Tick, RETENTION_DAYS};
use crate::config::ProtocolKind;
use crate::protocol::{Cause, ExposureNotification};
use crate::sim::{AttackOutcome, RunOutput};
use crate::world::AgentId;

/// Adopters whose cumulative true contact with reporting adopters reaches
/// the exposure threshold. A contact with reporter D counts when it happened
/// no later than D's report and no earlier than 13 days before the report
/// day, the span D's upload covers.
pub fn ground_truth_exposed(out: &RunOutput) -> BTreeSet<AgentId> {
    let step = out.config.step_seconds;
    let clock = SimClock::new(step);
    let reports: BTreeMap<AgentId, Tick> =
        out.reports.iter().filter(|r| r.consented).map(|r| (r.agent, r.tick)).collect();
    let mut ticks: BTreeMap<AgentId, u64> = BTreeMap::new();
    for c in &out.contacts {
        if !out.has_app[c.a.0] || !out.has_app[c.b.0] {
            continue;
        }
        for (x, d) in [(c.a, c.b), (c.b, c.a)] {
            let Some(&r) = reports.get(&d) else { continue };
            let first_day = clock.day_of(r).saturating_sub(RETENTION_DAYS - 1);
            if c.tick <= r && clock.day_of(c.tick) >= first_day {
                *ticks.entry(x).or_default() += 1;
            }
        }
    }
    let minutes_per_tick = step as f64 / 60.0;
    let threshold = out.config.tracing.exposure_minutes_threshold;
    ticks.into_iter().filter(|(_, n)| *n as f64 * minutes_per_tick >= threshold).map(|(a, _)| a).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    /// Notified, not exposed, and at least one notification had an attack cause.
    pub false_positive_attack: usize,
    /// Notified, not exposed, no attack involved (noise or window effects).
    pub false_positive_other: usize,
    pub false_negative: usize,
    /// Notification counts by cause label.
    pub by_cause: BTreeMap<String, usize>,
}

/// Agent-level confusion counts of the notification log against the
/// ground-truth exposed set.
pub fn score_notifications(notifications: &[ExposureNotification], exposed: &BTreeSet<AgentId>) -> Confusion {
    let mut notified: BTreeMap<AgentId, bool> = BTreeMap::new();
    let mut by_cause: BTreeMap<String, usize> = BTreeMap::new();
    for n in notifications {
        let attack = n.cause != Cause::TrueContact;
        *notified.entry(n.agent_id).or_default() |= attack;
        *by_cause.entry(n.cause.as_str().to_string()).or_default() += 1;
    }
    let mut c = Confusion { by_cause, ..Confusion::default() };
    for (agent, attack) in &notified {
        if exposed.contains(agent) {
            c.true_positive += 1;
        } else if *attack {
            c.false_positive_attack += 1;
        } else {
            c.false_positive_other += 1;
        }
    }
    c.false_negative = exposed.iter().filter(|a| !notified.contains_key(a)).count();
    c
}

pub fn notified_set(notifications: &[ExposureNotification]) -> BTreeSet<AgentId> {
    notifications.iter().map(|n| n.agent_id).collect()
}

/// Ticks from the completing report to the notification, true-contact
/// notifications only.
pub fn latencies(notifications: &[ExposureNotification]) -> Vec<Tick> {
    let mut v: Vec<Tick> = notifications
        .iter()
        .filter(|n| n.cause == Cause::TrueContact)
        .map(|n| n.tick - n.report_tick)
        .collect();
    v.sort_unstable();
    v
}

/// Lower median of a sorted slice.
pub fn median(sorted: &[Tick]) -> Option<Tick> {
    if sorted.is_empty() {
        None
    } else {
        Some(sorted[(sorted.len() - 1) / 2])
    }
}

/// Ticks from a report at `report_tick` to the first batch that carries it.
pub fn ticks_to_next_batch(report_tick: Tick, ticks_per_day: Tick) -> Tick {
    (report_tick / ticks_per_day + 1) * ticks_per_day - report_tick
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub min_minutes: Option<f64>,
    pub median_minutes: Option<f64>,
    pub max_minutes: Option<f64>,
}

impl LatencySummary {
    pub fn from_ticks(sorted: &[Tick], step_seconds: u64) -> Self {
        let m = |t: Tick| (t * step_seconds) as f64 / 60.0;
        Self {
            count: sorted.len(),
            min_minutes: sorted.first().map(|&t| m(t)),
            median_minutes: median(sorted).map(m),
            max_minutes: sorted.last().map(|&t| m(t)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpidemicSummary {
    pub attack_rate: f64,
    pub peak_infectious: usize,
    pub quarantine_person_days: f64,
    pub infections: usize,
    pub diagnoses: usize,
    pub reports: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacySummary {
    pub server_health_entries: usize,
    pub server_social_edges: usize,
    pub location_observations: usize,
    /// Mean coverage over sniffer victims; absent without a sniffer attack.
    pub sniffer_track_coverage: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OversightSummary {
    pub alerts: usize,
    pub held_notifications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub notifications: Confusion,
    pub notification_count: usize,
    pub latency: LatencySummary,
    pub epidemic: EpidemicSummary,
    pub privacy: PrivacySummary,
    pub oversight: OversightSummary,
}

pub fn compute_metrics(out: &RunOutput) -> RunMetrics {
    let exposed = ground_truth_exposed(out);
    let lat = latencies(&out.notifications);
    let ticks_per_day = SimClock::new(out.config.step_seconds).ticks_per_day();
    let coverage = match &out.attack {
        Some(AttackOutcome::Sniffer(s)) if !s.victims.is_empty() => {
            Some(s.victims.iter().map(|v| v.coverage).sum::<f64>() / s.victims.len() as f64)
        }
        _ => None,
    };
    let (alerts, held) = out.central.as_ref().map_or((0, 0), |c| (c.alerts.len(), c.held_notifications));
    RunMetrics {
        protocol: out.config.protocol,
        seed: out.config.rng_seed,
        notifications: score_notifications(&out.notifications, &exposed),
        notification_count: out.notifications.len(),
        latency: LatencySummary::from_ticks(&lat, out.config.step_seconds),
        epidemic: EpidemicSummary {
            attack_rate: out.attack_rate(),
            peak_infectious: out.timeseries.iter().map(|r| r.infectious).max().unwrap_or(0),
            quarantine_person_days: out.quarantine_person_ticks as f64 / ticks_per_day as f64,
            infections: out.initial_infected.len() + out.infections.len(),
            diagnoses: out.diagnoses.len(),
            reports: out.reports.iter().filter(|r| r.consented).count(),
        },
        privacy: PrivacySummary {
            server_health_entries: out.ledger.health_status_entries,
            server_social_edges: out.ledger.social_graph_edges,
            location_observations: out.ledger.location_observations,
            sniffer_track_coverage: coverage,
        },
        oversight: OversightSummary { alerts, held_notifications: held },
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompareError {
    #[error("runs differ in more than the protocol")]
    ScenarioMismatch,
}

/// One row per run of a paired comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub true_positive: usize,
    pub false_positive_attack: usize,
    pub false_positive_other: usize,
    pub false_negative: usize,
    pub median_latency_minutes: Option<f64>,
    pub health_status_entries: usize,
    pub social_graph_edges: usize,
    pub location_observations: usize,
    pub oversight_alerts: usize,
    pub held_notifications: usize,
    pub attack_rate: f64,
}

impl ComparisonRow {
    fn from_metrics(m: &RunMetrics) -> Self {
        Self {
            protocol: m.protocol,
            seed: m.seed,
            true_positive: m.notifications.true_positive,
            false_positive_attack: m.notifications.false_positive_attack,
            false_positive_other: m.notifications.false_positive_other,
            false_negative: m.notifications.false_negative,
            median_latency_minutes: m.latency.median_minutes,
            health_status_entries: m.privacy.server_health_entries,
            social_graph_edges: m.privacy.server_social_edges,
            location_observations: m.privacy.location_observations,
            oversight_alerts: m.oversight.alerts,
            held_notifications: m.oversight.held_notifications,
            attack_rate: m.epidemic.attack_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: [ComparisonRow; 2],
    /// Whether the two runs notified the same true-positive agents.
    pub same_true_positives: bool,
}

/// Side-by-side table of two runs that share everything but the protocol.
pub fn compare_protocols(a: &RunOutput, b: &RunOutput) -> Result<Comparison, CompareError> {
    if !a.config.same_scenario(&b.config) {
        return Err(CompareError::ScenarioMismatch);
    }
    let tp = |o: &RunOutput| -> BTreeSet<AgentId> {
        let exposed = ground_truth_exposed(o);
        notified_set(&o.notifications).intersection(&exposed).copied().collect()
    };
    Ok(Comparison {
        rows: [ComparisonRow::from_metrics(&compute_metrics(a)), ComparisonRow::from_metrics(&compute_metrics(b))],
        same_true_positives: tp(a) == tp(b),
    })
}
