//! The bounded 2D world, its agents and random-waypoint mobility.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{SimClock, Tick};
use crate::config::ScenarioConfig;
use crate::epidemic::{Course, HealthState};
use crate::geometry::Point;
use crate::rng::{stream_rng, SimRng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub id: AgentId,
    pub position: Point,
    pub waypoint: Point,
    pub speed: f64,
    /// Agent stays put until this tick after reaching a waypoint.
    pub paused_until: Tick,
    pub has_app: bool,
    pub health: HealthState,
    pub course: Option<Course>,
    pub quarantined_until: Option<Tick>,
}

impl Agent {
    pub fn is_quarantined(&self, now: Tick) -> bool {
        self.quarantined_until.is_some_and(|t| now < t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mobility {
    pub width: f64,
    pub height: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause_min_s: f64,
    pub pause_max_s: f64,
    /// Gathering points; a waypoint lands near one with `venue_probability`.
    pub venues: Vec<Point>,
    pub venue_probability: f64,
    pub venue_radius_m: f64,
}

impl Mobility {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let mut rng = stream_rng(cfg.rng_seed, Stream::Venues, 0);
        let mut m = Self {
            width: cfg.world_width_m,
            height: cfg.world_height_m,
            speed_min: cfg.speed_min_mps,
            speed_max: cfg.speed_max_mps,
            pause_min_s: cfg.pause_min_s,
            pause_max_s: cfg.pause_max_s,
            venues: Vec::new(),
            venue_probability: cfg.venue_probability,
            venue_radius_m: cfg.venue_radius_m,
        };
        m.venues = (0..cfg.venues).map(|_| m.uniform_point(&mut rng)).collect();
        m
    }

    fn uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    }

    fn uniform_point(&self, rng: &mut SimRng) -> Point {
        Point::new(Self::uniform(rng, 0.0, self.width), Self::uniform(rng, 0.0, self.height))
    }

    fn draw_point(&self, rng: &mut SimRng) -> Point {
        if self.venues.is_empty() || self.venue_probability <= 0.0 {
            return self.uniform_point(rng);
        }
        if rng.random::<f64>() >= self.venue_probability {
            return self.uniform_point(rng);
        }
        let v = self.venues[rng.random_range(0..self.venues.len())];
        let r = self.venue_radius_m * rng.random::<f64>().sqrt();
        let a = rng.random::<f64>() * std::f64::consts::TAU;
        Point::new((v.x + r * a.cos()).clamp(0.0, self.width), (v.y + r * a.sin()).clamp(0.0, self.height))
    }

    fn draw_speed(&self, rng: &mut SimRng) -> f64 {
        Self::uniform(rng, self.speed_min, self.speed_max)
    }

    fn draw_pause(&self, rng: &mut SimRng) -> f64 {
        Self::uniform(rng, self.pause_min_s, self.pause_max_s)
    }
}

/// Agents plus the clock. Each agent owns a private mobility stream, so one
/// agent pausing or quarantining never shifts another agent's draws.
#[derive(Debug)]
pub struct World {
    pub mobility: Mobility,
    pub clock: SimClock,
    pub agents: Vec<Agent>,
    mobility_rngs: Vec<SimRng>,
}

impl World {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let mobility = Mobility::from_config(cfg);
        let mut adoption = stream_rng(cfg.rng_seed, Stream::Adoption, 0);
        let mut mobility_rngs = Vec::with_capacity(cfg.n_agents);
        let mut agents = Vec::with_capacity(cfg.n_agents);
        for i in 0..cfg.n_agents {
            let mut rng = stream_rng(cfg.rng_seed, Stream::Mobility, i as u64);
            let position = mobility.draw_point(&mut rng);
            let waypoint = mobility.draw_point(&mut rng);
            let speed = mobility.draw_speed(&mut rng);
            // One uniform per agent keeps adopter sets nested across
            // adoption levels for the same seed.
            let u: f64 = adoption.random();
            agents.push(Agent {
                id: AgentId(i),
                position,
                waypoint,
                speed,
                paused_until: 0,
                has_app: u < cfg.adoption_fraction,
                health: HealthState::Susceptible,
                course: None,
                quarantined_until: None,
            });
            mobility_rngs.push(rng);
        }
        Self { mobility, clock: SimClock::new(cfg.step_seconds), agents, mobility_rngs }
    }

    pub fn positions(&self) -> Vec<Point> {
        self.agents.iter().map(|a| a.position).collect()
    }

    /// Moves every free agent toward its waypoint by `speed * step_seconds`.
    /// On arrival the agent lands exactly on the waypoint, then draws a
    /// pause, a new waypoint and a new speed. Quarantined agents stay put.
    pub fn step_mobility(&mut self) {
        let now = self.clock.tick();
        let step = self.clock.step_seconds() as f64;
        for (agent, rng) in self.agents.iter_mut().zip(self.mobility_rngs.iter_mut()) {
            if agent.is_quarantined(now) || now < agent.paused_until {
                continue;
            }
            let remaining = agent.position.distance(&agent.waypoint);
            let travel = agent.speed * step;
            if travel >= remaining {
                agent.position = agent.waypoint;
                let pause = self.mobility.draw_pause(rng);
                agent.paused_until = now + 1 + (pause / step).round() as Tick;
                agent.waypoint = self.mobility.draw_point(rng);
                agent.speed = self.mobility.draw_speed(rng);
            } else {
                let f = travel / remaining;
                agent.position.x += (agent.waypoint.x - agent.position.x) * f;
                agent.position.y += (agent.waypoint.y - agent.position.y) * f;
            }
            agent.position.x = agent.position.x.clamp(0.0, self.mobility.width);
            agent.position.y = agent.position.y.clamp(0.0, self.mobility.height);
        }
    }

    pub fn in_bounds(&self, p: Point) -> bool {
        (0.0..=self.mobility.width).contains(&p.x) && (0.0..=self.mobility.height).contains(&p.y)
    }

    pub fn pairwise_distances(&self) -> DistanceTable {
        pairwise_distances(&self.positions())
    }
}

/// Dense symmetric distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceTable {
    n: usize,
    d: Vec<f64>,
}

impl DistanceTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.d[a * self.n + b]
    }
}

pub fn pairwise_distances(points: &[Point]) -> DistanceTable {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let v = points[a].distance(&points[b]);
            d[a * n + b] = v;
            d[b * n + a] = v;
        }
    }
    DistanceTable { n, d }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig {
            world_width_m: 200.0,
            world_height_m: 100.0,
            n_agents: 30,
            speed_min_mps: 0.5,
            speed_max_mps: 3.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn three_four_five() {
        let t = pairwise_distances(&[Point::new(0.0, 0.0), Point::new(3.0, 4.0)]);
        assert_eq!(t.get(0, 1), 5.0);
        assert_eq!(t.get(1, 0), 5.0);
        assert_eq!(t.get(0, 0), 0.0);
    }

    #[test]
    fn table_matches_double_loop() {
        let world = World::new(&cfg());
        let t = world.pairwise_distances();
        let pos = world.positions();
        for (i, a) in pos.iter().enumerate() {
            for (j, b) in pos.iter().enumerate() {
                let oracle = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                assert!((t.get(i, j) - oracle).abs() < 1e-9);
                assert_eq!(t.get(i, j), t.get(j, i));
            }
        }
    }

    #[test]
    fn static_world_never_moves() {
        let mut world = World::new(&ScenarioConfig { speed_min_mps: 0.0, speed_max_mps: 0.0, ..cfg() });
        let start = world.positions();
        for _ in 0..500 {
            world.step_mobility();
            world.clock.advance();
        }
        assert_eq!(world.positions(), start);
    }

    #[test]
    fn arrival_lands_on_waypoint_and_redraws() {
        let mut world = World::new(&cfg());
        let a = &mut world.agents[0];
        a.waypoint = Point::new(a.position.x + 0.1, a.position.y);
        let target = a.waypoint;
        world.step_mobility();
        assert_eq!(world.agents[0].position, target);
        assert_ne!(world.agents[0].waypoint, target);
    }

    #[test]
    fn positions_stay_in_bounds_and_trace_is_reproducible() {
        let trace = |c: &ScenarioConfig| {
            let mut world = World::new(c);
            let mut out = Vec::new();
            for _ in 0..1000 {
                world.step_mobility();
                world.clock.advance();
                for a in &world.agents {
                    assert!(world.in_bounds(a.position));
                    out.extend_from_slice(&a.position.x.to_le_bytes());
                    out.extend_from_slice(&a.position.y.to_le_bytes());
                }
            }
            out
        };
        let c = ScenarioConfig { pause_max_s: 300.0, ..cfg() };
        assert_eq!(trace(&c), trace(&c));
    }

    #[test]
    fn quarantined_agents_do_not_move() {
        let mut world = World::new(&cfg());
        world.agents[3].quarantined_until = Some(100);
        let p = world.agents[3].position;
        for _ in 0..50 {
            world.step_mobility();
            world.clock.advance();
        }
        assert_eq!(world.agents[3].position, p);
    }

    #[test]
    fn adoption_sets_are_nested_across_levels() {
        let adopters = |f: f64| -> Vec<bool> {
            World::new(&ScenarioConfig { adoption_fraction: f, ..cfg() }).agents.iter().map(|a| a.has_app).collect()
        };
        let low = adopters(0.3);
        let high = adopters(0.8);
        assert!(low.iter().zip(&high).all(|(l, h)| !*l || *h));
        assert!(adopters(0.0).iter().all(|a| !a));
        assert!(adopters(1.0).iter().all(|a| *a));
    }
}
