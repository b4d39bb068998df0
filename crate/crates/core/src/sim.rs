//! The event loop. One run is a pure function of its config.
//!
//! Per tick, in order: server phase (batch publication or status polls),
//! quarantine of freshly notified agents, broadcast and attack hooks,
//! ground-truth contacts and transmission, diagnoses and reports, then
//! mobility. One extra server phase runs at the final tick so that every
//! report made during the run is delivered.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::relay::RelayAttack;
use crate::attacks::sniffer::{coverage, SnifferGrid, Track};
use crate::attacks::sybil::{register_sybils, Attribution, SybilRegistration, SybilStations};
use crate::attacks::{grid_positions, AttackKind};
use crate::clock::{SimClock, Tick, RETENTION_DAYS};
use crate::config::{ProtocolKind, ScenarioConfig};
use crate::crypto::{DiagnosisKey, EphemeralId};
use crate::epidemic::{
    apply_quarantine, expose, progress_and_diagnose, transmit_step, Compartments, ContactEvent, HealthState,
    Infection,
};
use crate::geometry::{pairs_within, Point};
use crate::protocol::centralised::{CentralDevice, CentralParams, CentralServer, CentralStats, SourceId};
use crate::protocol::decentralised::{BatchIndex, DecentralisedServer, DeviceState};
use crate::protocol::{ExposureNotification, ProtocolError, RiskContext, ServerLedger};
use crate::radio::{broadcast_round, Broadcaster, Provenance, Reception};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::world::{AgentId, World};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every agent position at every tick.
    pub record_trajectories: bool,
    /// Keep every reception, injected ones included.
    pub record_receptions: bool,
    /// Keep the identifier -> (agent, interval) table of everything broadcast.
    pub record_broadcasts: bool,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
}

fn invariant(msg: impl Into<String>) -> SimError {
    SimError::Invariant(msg.into())
}

/// One row of the epidemic curve. `infectious` counts everyone currently
/// able to transmit, diagnosed agents included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub tick: Tick,
    pub susceptible: usize,
    pub exposed: usize,
    pub infectious: usize,
    pub diagnosed_cum: usize,
    pub quarantined: usize,
}

/// A diagnosed adopter's report decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEvent {
    pub agent: AgentId,
    pub tick: Tick,
    pub consented: bool,
    /// Decentralised: the uploaded keys.
    pub keys: Vec<DiagnosisKey>,
    /// Centralised: number of received records uploaded.
    pub records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimCoverage {
    pub agent: AgentId,
    pub report_tick: Tick,
    pub in_range_ticks: usize,
    pub window_ticks: usize,
    pub matched_ticks: usize,
    pub coverage: f64,
    /// Matched ticks over every tick of the published window.
    pub route_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct SnifferOutcome {
    pub sniffers: Vec<Point>,
    pub range: f64,
    pub observations: usize,
    /// Reconstructed tracks with the agent that published the key.
    pub tracks: Vec<(AgentId, Track)>,
    pub victims: Vec<VictimCoverage>,
    /// Agents that ever spent time inside coverage, with the tick counts.
    pub in_range_ticks: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RelayOutcome {
    pub injected: usize,
    pub provenance: Provenance,
    pub captured: Vec<EphemeralId>,
}

#[derive(Clone, Debug)]
pub struct SybilOutcome {
    pub stations: Vec<Point>,
    pub radius: f64,
    pub bucket_ticks: u64,
    /// Attributions with the agent that published the matched key.
    pub attributions: Vec<(AgentId, Attribution)>,
    pub registration: Option<SybilRegistration>,
}

#[derive(Clone, Debug)]
pub enum AttackOutcome {
    Sniffer(SnifferOutcome),
    Relay(RelayOutcome),
    Sybil(SybilOutcome),
}

#[derive(Debug)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub n_ticks: Tick,
    pub has_app: Vec<bool>,
    pub timeseries: Vec<TimeseriesRow>,
    /// Ground-truth contacts within the infection radius, all agents.
    pub contacts: Vec<ContactEvent>,
    pub initial_infected: Vec<AgentId>,
    pub infections: Vec<Infection>,
    pub diagnoses: Vec<(Tick, AgentId)>,
    pub reports: Vec<ReportEvent>,
    pub notifications: Vec<ExposureNotification>,
    pub quarantine_person_ticks: u64,
    pub ledger: ServerLedger,
    pub central: Option<CentralStats>,
    /// Decentralised batches: (publish tick, number of keys).
    pub batches: Vec<(Tick, usize)>,
    pub attack: Option<AttackOutcome>,
    pub final_health: Vec<HealthState>,
    /// Tick-major positions, when recorded.
    pub trajectories: Option<Vec<Vec<Point>>>,
    pub receptions: Option<Vec<Reception>>,
    pub broadcasts: Option<BTreeMap<EphemeralId, (AgentId, u64)>>,
}

impl RunOutput {
    pub fn attack_rate(&self) -> f64 {
        if self.final_health.is_empty() {
            return 0.0;
        }
        self.final_health.iter().filter(|h| h.ever_infected()).count() as f64 / self.final_health.len() as f64
    }
}

enum Protocol {
    Decentralised { server: DecentralisedServer, devices: Vec<Option<DeviceState>> },
    Centralised { server: Box<CentralServer>, devices: Vec<Option<CentralDevice>> },
}

impl Protocol {
    fn server_phase(&mut self, clock: &SimClock, ctx: &RiskContext, tolerance_s: u64, poll_ticks: u64, batches: &mut Vec<(Tick, usize)>) -> Result<Vec<ExposureNotification>, SimError> {
        let mut out = Vec::new();
        match self {
            Protocol::Decentralised { server, devices } => {
                if clock.tick() > 0 && clock.is_day_boundary() {
                    let batch = server.publish_batch(clock)?;
                    batches.push((batch.publish_tick, batch.keys.len()));
                    if !batch.keys.is_empty() {
                        let index = BatchIndex::new(&batch);
                        for d in devices.iter_mut().flatten() {
                            out.extend(d.match_local(&index, ctx, tolerance_s));
                        }
                    }
                }
            }
            Protocol::Centralised { server, devices } => {
                if clock.tick().is_multiple_of(poll_ticks) {
                    for d in devices.iter().flatten() {
                        out.extend(server.poll_status(d, clock));
                    }
                }
            }
        }
        Ok(out)
    }

    fn prune(&mut self, clock: &SimClock) {
        match self {
            Protocol::Decentralised { devices, .. } => devices.iter_mut().flatten().for_each(|d| d.prune(clock)),
            Protocol::Centralised { devices, .. } => devices.iter_mut().flatten().for_each(|d| d.prune(clock)),
        }
    }

    fn current_eid(&mut self, agent: usize, clock: &SimClock) -> Result<Option<EphemeralId>, SimError> {
        Ok(match self {
            Protocol::Decentralised { devices, .. } => devices[agent].as_mut().map(|d| d.current_eid(clock)),
            Protocol::Centralised { server, devices } => match devices[agent].as_mut() {
                Some(d) => Some(d.current_eid(server, clock)?),
                None => None,
            },
        })
    }

    fn deliver(&mut self, r: &Reception, clock: &SimClock) {
        match self {
            Protocol::Decentralised { devices, .. } => {
                if let Some(d) = devices[r.receiver.0].as_mut() {
                    d.on_reception(r, clock);
                }
            }
            Protocol::Centralised { devices, .. } => {
                if let Some(d) = devices[r.receiver.0].as_mut() {
                    d.on_reception(r, clock);
                }
            }
        }
    }

    fn report(&mut self, agent: AgentId, clock: &SimClock, ctx: &RiskContext) -> Result<ReportEvent, SimError> {
        let tick = clock.tick();
        match self {
            Protocol::Decentralised { server, devices } => {
                let d = devices[agent.0].as_mut().ok_or_else(|| invariant("report from a non-adopter"))?;
                let upload = d.report_diagnosis(clock)?;
                if upload.keys.len() > RETENTION_DAYS as usize {
                    return Err(invariant(format!("upload of {} keys exceeds the retention window", upload.keys.len())));
                }
                let keys = upload.keys.clone();
                server.receive_upload(upload, tick);
                Ok(ReportEvent { agent, tick, consented: true, keys, records: 0 })
            }
            Protocol::Centralised { server, devices } => {
                let d = devices[agent.0].as_mut().ok_or_else(|| invariant("report from a non-adopter"))?;
                let received = d.upload_received(clock)?;
                server.report_diagnosis_central(d.pseudonym, &received, clock, ctx)?;
                Ok(ReportEvent { agent, tick, consented: true, keys: Vec::new(), records: received.len() })
            }
        }
    }

    fn ledger(&self) -> ServerLedger {
        match self {
            Protocol::Decentralised { server, .. } => server.ledger(),
            Protocol::Centralised { server, .. } => server.ledger(),
        }
    }
}

struct SnifferState {
    grid: SnifferGrid,
    /// Per agent, in-range tick counts per day.
    in_range: Vec<Vec<u32>>,
}

enum AttackState {
    None,
    Sniffer(Box<SnifferState>),
    Relay(Box<RelayAttack>),
    Sybil(Box<SybilStations>),
}

fn initial_cases(cfg: &ScenarioConfig, rng: &mut SimRng) -> Vec<usize> {
    let e = &cfg.epidemic;
    let mut ids: Vec<usize> = if e.initial_infected_ids.is_empty() {
        sample(rng, cfg.n_agents, e.initial_infected.min(cfg.n_agents)).into_vec()
    } else {
        e.initial_infected_ids.clone()
    };
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Runs one scenario to completion.
pub fn run(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunOutput, SimError> {
    cfg.validate().map_err(|e| invariant(format!("config: {e}")))?;
    let seed = cfg.rng_seed;
    let n = cfg.n_agents;
    let n_ticks = cfg.n_ticks();
    let mut world = World::new(cfg);
    let step = cfg.step_seconds;
    let ticks_per_day = world.clock.ticks_per_day();

    let mut epi_rng = stream_rng(seed, Stream::Epidemic, 0);
    let mut quarantine_rng = stream_rng(seed, Stream::Quarantine, 0);
    let mut radio_rng = stream_rng(seed, Stream::Radio, 0);
    let mut consent_rng = stream_rng(seed, Stream::Protocol, 0);
    let mut attack_rng = stream_rng(seed, Stream::Attack, 0);

    let initial = initial_cases(cfg, &mut epi_rng);
    for &i in &initial {
        expose(&mut world.agents[i], 0, &cfg.epidemic, &world.clock, &mut epi_rng);
    }

    let ctx = RiskContext {
        radio: cfg.radio.clone(),
        proximity_threshold_m: cfg.tracing.proximity_threshold_m,
        exposure_minutes_threshold: cfg.tracing.exposure_minutes_threshold,
        step_seconds: step,
    };
    let tolerance_s = cfg.tracing.replay_tolerance_s;
    let poll_ticks = cfg.tracing.poll_interval_s / step;
    let has_app: Vec<bool> = world.agents.iter().map(|a| a.has_app).collect();

    let mut sybil_registration = None;
    let mut protocol = match cfg.protocol {
        ProtocolKind::Decentralised => Protocol::Decentralised {
            server: DecentralisedServer::new(cfg.blacklist()),
            devices: (0..n)
                .map(|i| has_app[i].then(|| DeviceState::new(AgentId(i), stream_rng(seed, Stream::DeviceKeys, i as u64))))
                .collect(),
        },
        ProtocolKind::Centralised => {
            let t = &cfg.tracing;
            let mut server = Box::new(CentralServer::new(
                CentralParams {
                    rate_limit_per_source: t.rate_limit_per_source,
                    pow_difficulty_bits: t.pow_difficulty_bits,
                    fanout_threshold: t.fanout_threshold,
                    held_policy: t.held_policy,
                    replay_tolerance_s: t.replay_tolerance_s,
                },
                stream_rng(seed, Stream::Protocol, 1),
            ));
            server.blacklist_ids(cfg.blacklist());
            let mut devices = Vec::with_capacity(n);
            for (i, &app) in has_app.iter().enumerate() {
                if !app {
                    devices.push(None);
                    continue;
                }
                let token = server.issue_challenge().solve();
                let p = server.register_user(SourceId(i as u64), &token, &world.clock)?;
                devices.push(Some(CentralDevice::new(AgentId(i), p)));
            }
            if cfg.attack.kind == AttackKind::Sybil {
                sybil_registration =
                    Some(register_sybils(&mut server, SourceId(u64::MAX), cfg.attack.sybil_accounts, &world.clock));
            }
            Protocol::Centralised { server, devices }
        }
    };

    let a = &cfg.attack;
    let mut attack = match a.kind {
        AttackKind::None => AttackState::None,
        AttackKind::Sniffer => {
            let range = a.sniffer_range_m.unwrap_or(cfg.radio.max_range_m);
            let positions = grid_positions(a.sniffer_rows, a.sniffer_cols, cfg.world_width_m, cfg.world_height_m);
            AttackState::Sniffer(Box::new(SnifferState {
                grid: SnifferGrid::new(positions, range, cfg.world_width_m, cfg.world_height_m),
                in_range: vec![vec![0; cfg.duration_days as usize]; n],
            }))
        }
        AttackKind::Relay => AttackState::Relay(Box::new(RelayAttack::new(a, &cfg.radio, step))),
        AttackKind::Sybil => AttackState::Sybil(Box::new(SybilStations::new(
            grid_positions(a.sybil_rows, a.sybil_cols, cfg.world_width_m, cfg.world_height_m),
            a.sybil_encounter_radius_m,
            a.sybil_bucket_seconds / step,
            cfg.world_width_m,
            cfg.world_height_m,
        ))),
    };

    let mut timeseries = Vec::with_capacity(n_ticks as usize);
    let mut contacts = Vec::new();
    let mut infections = Vec::new();
    let mut diagnoses = Vec::new();
    let mut reports = Vec::new();
    let mut notifications = Vec::new();
    let mut batches = Vec::new();
    let mut quarantine_person_ticks = 0u64;
    let mut diagnosed_cum = 0usize;
    let mut eid_table: HashMap<EphemeralId, (AgentId, u64)> = HashMap::new();
    let mut trajectories = opts.record_trajectories.then(Vec::new);
    let mut receptions_log = opts.record_receptions.then(Vec::new);

    for t in 0..n_ticks {
        let clock = world.clock;
        debug_assert_eq!(clock.tick(), t);

        // server phase
        let fresh = protocol.server_phase(&clock, &ctx, tolerance_s, poll_ticks, &mut batches)?;
        if t > 0 && clock.is_day_boundary() {
            protocol.prune(&clock);
        }
        let notified: Vec<AgentId> = fresh.iter().map(|n| n.agent_id).collect::<BTreeSet<_>>().into_iter().collect();
        notifications.extend(fresh);
        apply_quarantine(&mut world.agents, &notified, &cfg.epidemic, &clock, &mut quarantine_rng);

        // broadcast
        let positions = world.positions();
        let mut on_air = Vec::new();
        for (i, p) in positions.iter().enumerate() {
            if let Some(eid) = protocol.current_eid(i, &clock)? {
                let interval = clock.interval_index();
                match eid_table.insert(eid, (AgentId(i), interval)) {
                    Some(prev) if prev != (AgentId(i), interval) => {
                        return Err(invariant(format!(
                            "identifier {eid} broadcast by agent {} in interval {} and agent {i} in interval {interval}",
                            prev.0, prev.1
                        )));
                    }
                    _ => {}
                }
                on_air.push(Broadcaster { agent: AgentId(i), position: *p, eid });
            }
        }
        let mut receptions = broadcast_round(&on_air, &cfg.radio, t, &mut radio_rng);
        match &mut attack {
            AttackState::None => {}
            AttackState::Sniffer(s) => {
                let seen: HashSet<EphemeralId> = s.grid.sniff_round(&on_air, t).into_iter().map(|o| o.eid).collect();
                let day = clock.day_index() as usize;
                for b in &on_air {
                    if seen.contains(&b.eid) {
                        s.in_range[b.agent.0][day] += 1;
                    }
                }
            }
            AttackState::Relay(r) => receptions.extend(r.step(t, &on_air, &mut attack_rng)),
            AttackState::Sybil(s) => s.listen(&on_air, t),
        }
        for r in &receptions {
            protocol.deliver(r, &clock);
        }
        if let Some(log) = receptions_log.as_mut() {
            log.extend(receptions);
        }
        if let Some(tr) = trajectories.as_mut() {
            tr.push(positions.clone());
        }

        // ground-truth contacts and transmission
        let tick_contacts: Vec<ContactEvent> = pairs_within(&positions, cfg.epidemic.infection_radius_m)
            .into_iter()
            .map(|(a, b)| ContactEvent { tick: t, a: AgentId(a), b: AgentId(b) })
            .collect();
        infections.extend(transmit_step(&mut world.agents, &tick_contacts, &cfg.epidemic, &clock, &mut epi_rng));
        contacts.extend(tick_contacts);

        // diagnoses and reports
        for agent in progress_and_diagnose(&mut world.agents, &clock) {
            diagnoses.push((t, agent));
            diagnosed_cum += 1;
            if !has_app[agent.0] {
                continue;
            }
            let consent = consent_rng.random::<f64>() < cfg.tracing.reporting_probability;
            if consent {
                reports.push(protocol.report(agent, &clock, &ctx)?);
            } else {
                reports.push(ReportEvent { agent, tick: t, consented: false, keys: Vec::new(), records: 0 });
            }
        }

        let c = Compartments::count(&world.agents);
        if c.total() != n {
            return Err(invariant(format!("compartments sum to {} for {n} agents at tick {t}", c.total())));
        }
        let quarantined = world.agents.iter().filter(|a| a.is_quarantined(t)).count();
        quarantine_person_ticks += quarantined as u64;
        timeseries.push(TimeseriesRow {
            tick: t,
            susceptible: c.susceptible,
            exposed: c.exposed,
            infectious: c.infectious + c.diagnosed,
            diagnosed_cum,
            quarantined,
        });

        world.step_mobility();
        if let Some(a) = world.agents.iter().find(|a| !world.in_bounds(a.position)) {
            return Err(invariant(format!("agent {} left the world at tick {t}", a.id)));
        }
        world.clock.advance();
    }

    // flush: deliver everything reported during the run
    let clock = world.clock;
    notifications.extend(protocol.server_phase(&clock, &ctx, tolerance_s, poll_ticks, &mut batches)?);

    let mut ledger = protocol.ledger();
    let published: Vec<(AgentId, DiagnosisKey)> =
        reports.iter().flat_map(|r| r.keys.iter().map(move |k| (r.agent, *k))).collect();
    let attack = match attack {
        AttackState::None => None,
        AttackState::Sniffer(s) => {
            let keys: Vec<DiagnosisKey> = published.iter().map(|(_, k)| *k).collect();
            let tracks: Vec<(AgentId, Track)> =
                published.iter().map(|(a, _)| *a).zip(s.grid.reconstruct_tracks(&keys)).collect();
            ledger.location_observations = match &protocol {
                Protocol::Decentralised { .. } => tracks.iter().map(|(_, t)| t.points.len()).sum(),
                Protocol::Centralised { server, .. } => {
                    eid_table.keys().filter(|e| server.resolve(e).is_some()).map(|e| s.grid.observations_of(e).len()).sum()
                }
            };
            let mut victims = Vec::new();
            for r in reports.iter().filter(|r| r.consented && !r.keys.is_empty()) {
                let days: BTreeSet<u64> = r.keys.iter().map(|k| k.day_index).collect();
                let in_range: usize = days.iter().map(|&d| s.in_range[r.agent.0][d as usize] as usize).sum();
                let matched: BTreeSet<Tick> = tracks
                    .iter()
                    .filter(|(a, _)| *a == r.agent)
                    .flat_map(|(_, t)| t.points.iter().map(|p| p.tick))
                    .filter(|&tick| tick <= r.tick)
                    .collect();
                let first_day = days.iter().next().copied().unwrap_or(0);
                let window_ticks = (r.tick + 1 - first_day * ticks_per_day) as usize;
                victims.push(VictimCoverage {
                    agent: r.agent,
                    report_tick: r.tick,
                    in_range_ticks: in_range,
                    window_ticks,
                    matched_ticks: matched.len(),
                    coverage: coverage(matched.len(), in_range),
                    route_fraction: coverage(matched.len(), window_ticks),
                });
            }
            Some(AttackOutcome::Sniffer(SnifferOutcome {
                sniffers: s.grid.positions().to_vec(),
                range: s.grid.range(),
                observations: s.grid.observation_count(),
                tracks,
                victims,
                in_range_ticks: s.in_range.iter().map(|d| d.iter().map(|&c| c as usize).sum()).collect(),
            }))
        }
        AttackState::Relay(r) => Some(AttackOutcome::Relay(RelayOutcome {
            injected: r.injected(),
            provenance: r.provenance(),
            captured: r.captured_eids().iter().copied().collect(),
        })),
        AttackState::Sybil(s) => {
            let keys: Vec<DiagnosisKey> = published.iter().map(|(_, k)| *k).collect();
            let attributions = s.identify(&keys).into_iter().map(|a| (published[a.key].0, a)).collect();
            Some(AttackOutcome::Sybil(SybilOutcome {
                stations: s.positions().to_vec(),
                radius: cfg.attack.sybil_encounter_radius_m,
                bucket_ticks: s.bucket_ticks(),
                attributions,
                registration: sybil_registration,
            }))
        }
    };

    let central = match &protocol {
        Protocol::Centralised { server, .. } => Some(server.stats().clone()),
        Protocol::Decentralised { .. } => None,
    };

    Ok(RunOutput {
        config: cfg.clone(),
        n_ticks,
        has_app,
        timeseries,
        contacts,
        initial_infected: initial.into_iter().map(AgentId).collect(),
        infections,
        diagnoses,
        reports,
        notifications,
        quarantine_person_ticks,
        ledger,
        central,
        batches,
        attack,
        final_health: world.agents.iter().map(|a| a.health).collect(),
        trajectories,
        receptions: receptions_log,
        broadcasts: opts.record_broadcasts.then(|| eid_table.into_iter().collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            world_width_m: 60.0,
            world_height_m: 60.0,
            n_agents: 30,
            duration_days: 3,
            pause_max_s: 1800.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn empty_world_runs() {
        let out = run(&ScenarioConfig { n_agents: 0, duration_days: 1, ..ScenarioConfig::default() }, RunOptions::default())
            .unwrap();
        assert_eq!(out.timeseries.len(), 1440);
        assert!(out.notifications.is_empty());
    }

    #[test]
    fn same_config_same_everything() {
        let cfg = small();
        let a = run(&cfg, RunOptions { record_receptions: true, ..RunOptions::default() }).unwrap();
        let b = run(&cfg, RunOptions { record_receptions: true, ..RunOptions::default() }).unwrap();
        assert_eq!(a.contacts, b.contacts);
        assert_eq!(a.notifications, b.notifications);
        assert_eq!(a.receptions, b.receptions);
        assert_eq!(a.timeseries, b.timeseries);
    }

    #[test]
    fn conservation_and_interval_clock() {
        let out = run(&small(), RunOptions::default()).unwrap();
        for row in &out.timeseries {
            assert!(row.susceptible + row.exposed + row.infectious <= 30);
        }
        assert_eq!(out.n_ticks, 3 * 1440);
    }

    #[test]
    fn zero_initial_infected_means_no_diagnoses() {
        let mut cfg = small();
        cfg.epidemic.initial_infected = 0;
        let out = run(&cfg, RunOptions::default()).unwrap();
        assert!(out.diagnoses.is_empty() && out.infections.is_empty());
    }

    #[test]
    fn non_adopters_never_hear_or_are_heard() {
        let mut cfg = small();
        cfg.adoption_fraction = 0.5;
        let out = run(&cfg, RunOptions { record_receptions: true, record_broadcasts: true, ..RunOptions::default() }).unwrap();
        let table = out.broadcasts.unwrap();
        for r in out.receptions.unwrap() {
            assert!(out.has_app[r.receiver.0]);
            assert!(out.has_app[table[&r.sender_eid].0 .0]);
        }
    }
}
