//! Contact-driven SEIR-style epidemic with diagnosis and quarantine.
//!
//! Infection uses true distance only; radio and app adoption play no part.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{SimClock, Tick, DAY_SECONDS};
use crate::rng::SimRng;
use crate::world::{Agent, AgentId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpidemicParams {
    pub p_transmit_per_contact_minute: f64,
    pub infection_radius_m: f64,
    pub incubation_days: f64,
    pub infectious_days: f64,
    /// Delay from symptom onset (start of infectiousness) to diagnosis.
    pub test_delay_days: f64,
    /// Capped at the population size.
    pub initial_infected: usize,
    /// Explicit index cases; overrides `initial_infected` when non-empty.
    pub initial_infected_ids: Vec<usize>,
    pub quarantine_compliance: f64,
    pub quarantine_days: f64,
    /// Transmission multiplier for a quarantined source.
    pub quarantined_transmit_factor: f64,
    /// Draw stage durations uniformly in [0.5, 1.5] x mean instead of using
    /// the means.
    pub stochastic_durations: bool,
    /// When false, infected agents never recover.
    pub recovery: bool,
}

impl Default for EpidemicParams {
    fn default() -> Self {
        Self {
            p_transmit_per_contact_minute: 0.01,
            infection_radius_m: 2.0,
            incubation_days: 3.0,
            infectious_days: 7.0,
            test_delay_days: 2.0,
            initial_infected: 3,
            initial_infected_ids: Vec::new(),
            quarantine_compliance: 1.0,
            quarantine_days: 14.0,
            quarantined_transmit_factor: 0.0,
            stochastic_durations: false,
            recovery: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthState {
    Susceptible,
    Exposed { since: Tick },
    Infectious { since: Tick },
    Diagnosed { at: Tick },
    Recovered,
}

impl HealthState {
    pub fn is_susceptible(&self) -> bool {
        matches!(self, HealthState::Susceptible)
    }

    /// Can pass the infection on (subject to quarantine).
    pub fn is_contagious(&self) -> bool {
        matches!(self, HealthState::Infectious { .. } | HealthState::Diagnosed { .. })
    }

    pub fn ever_infected(&self) -> bool {
        !self.is_susceptible()
    }
}

/// Scheduled stage transitions for one infection, fixed at exposure time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Course {
    pub exposed_at: Tick,
    pub onset_at: Tick,
    pub diagnosis_at: Tick,
    pub recovery_at: Option<Tick>,
}

impl Course {
    pub fn schedule(exposed_at: Tick, params: &EpidemicParams, clock: &SimClock, rng: &mut SimRng) -> Self {
        let mut dur = |days: f64| -> Tick {
            let scale = if params.stochastic_durations { rng.random_range(0.5..=1.5) } else { 1.0 };
            clock.ticks_for_seconds(days * scale * DAY_SECONDS as f64)
        };
        let incubation = dur(params.incubation_days);
        let test_delay = dur(params.test_delay_days);
        let infectious = dur(params.infectious_days);
        let onset_at = exposed_at + incubation;
        Self {
            exposed_at,
            onset_at,
            diagnosis_at: onset_at + test_delay,
            recovery_at: params.recovery.then_some(onset_at + infectious),
        }
    }
}

/// A pair of agents within the infection radius at one tick; the ground-truth
/// contact definition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContactEvent {
    pub tick: Tick,
    /// Always `a < b`.
    pub a: AgentId,
    pub b: AgentId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Infection {
    pub tick: Tick,
    pub infected: AgentId,
    pub source: Option<AgentId>,
}

pub fn expose(agent: &mut Agent, tick: Tick, params: &EpidemicParams, clock: &SimClock, rng: &mut SimRng) {
    let course = Course::schedule(tick, params, clock, rng);
    agent.course = Some(course);
    agent.health = if course.onset_at <= tick {
        HealthState::Infectious { since: tick }
    } else {
        HealthState::Exposed { since: tick }
    };
}

/// Each susceptible agent in contact with a contagious one is exposed with
/// probability `1 - (1 - p)^(minutes * factor)`, one independent draw per
/// contagious contact, evaluated against the states at the start of the
/// tick. Contacts are visited in sorted order.
pub fn transmit_step(
    agents: &mut [Agent],
    contacts: &[ContactEvent],
    params: &EpidemicParams,
    clock: &SimClock,
    rng: &mut SimRng,
) -> Vec<Infection> {
    let now = clock.tick();
    let minutes = clock.step_seconds() as f64 / 60.0;
    let snapshot: Vec<(HealthState, bool)> =
        agents.iter().map(|a| (a.health, a.is_quarantined(now))).collect();
    let mut out = Vec::new();
    for c in contacts {
        for (src, dst) in [(c.a, c.b), (c.b, c.a)] {
            let (src_state, src_q) = snapshot[src.0];
            if !src_state.is_contagious() || !snapshot[dst.0].0.is_susceptible() {
                continue;
            }
            if !agents[dst.0].health.is_susceptible() {
                continue;
            }
            let factor = if src_q { params.quarantined_transmit_factor } else { 1.0 };
            let p = 1.0 - (1.0 - params.p_transmit_per_contact_minute).powf(minutes * factor);
            if p <= 0.0 {
                continue;
            }
            if rng.random::<f64>() < p {
                expose(&mut agents[dst.0], now, params, clock, rng);
                out.push(Infection { tick: now, infected: dst, source: Some(src) });
            }
        }
    }
    out
}

/// Applies scheduled transitions due at `clock`; returns agents diagnosed now.
/// Diagnosed agents quarantine until recovery.
pub fn progress_and_diagnose(agents: &mut [Agent], clock: &SimClock) -> Vec<AgentId> {
    let now = clock.tick();
    let mut diagnosed = Vec::new();
    for agent in agents.iter_mut() {
        let Some(course) = agent.course else { continue };
        if let HealthState::Exposed { .. } = agent.health {
            if now >= course.onset_at {
                agent.health = HealthState::Infectious { since: now };
            }
        }
        if let HealthState::Infectious { .. } = agent.health {
            if now >= course.diagnosis_at && course.recovery_at.is_none_or(|r| course.diagnosis_at <= r) {
                agent.health = HealthState::Diagnosed { at: now };
                agent.quarantined_until = Some(course.recovery_at.unwrap_or(Tick::MAX).max(now + 1));
                diagnosed.push(agent.id);
            }
        }
        if agent.health.is_contagious() && course.recovery_at.is_some_and(|r| now >= r) {
            agent.health = HealthState::Recovered;
        }
    }
    diagnosed
}

/// Notified agents comply with probability `quarantine_compliance`.
/// Returns the agents newly put into quarantine.
pub fn apply_quarantine(
    agents: &mut [Agent],
    notified: &[AgentId],
    params: &EpidemicParams,
    clock: &SimClock,
    rng: &mut SimRng,
) -> Vec<AgentId> {
    let now = clock.tick();
    let until = now + clock.ticks_for_seconds(params.quarantine_days * DAY_SECONDS as f64);
    let mut out = Vec::new();
    for &id in notified {
        let comply = if params.quarantine_compliance >= 1.0 {
            true
        } else if params.quarantine_compliance <= 0.0 {
            false
        } else {
            rng.random::<f64>() < params.quarantine_compliance
        };
        if !comply {
            continue;
        }
        let agent = &mut agents[id.0];
        let current = agent.quarantined_until.unwrap_or(0);
        if until > current {
            agent.quarantined_until = Some(until);
        }
        out.push(id);
    }
    out
}

/// Counts per compartment; always sums to the population size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compartments {
    pub susceptible: usize,
    pub exposed: usize,
    pub infectious: usize,
    pub diagnosed: usize,
    pub recovered: usize,
}

impl Compartments {
    pub fn count(agents: &[Agent]) -> Self {
        let mut c = Self::default();
        for a in agents {
            match a.health {
                HealthState::Susceptible => c.susceptible += 1,
                HealthState::Exposed { .. } => c.exposed += 1,
                HealthState::Infectious { .. } => c.infectious += 1,
                HealthState::Diagnosed { .. } => c.diagnosed += 1,
                HealthState::Recovered => c.recovered += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.susceptible + self.exposed + self.infectious + self.diagnosed + self.recovered
    }
}
