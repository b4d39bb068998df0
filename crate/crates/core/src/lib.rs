//! Deterministic agent-based simulator of Bluetooth proximity contact tracing.
//!
//! The crate models a bounded 2D world of random-waypoint agents, a BLE-like
//! broadcast channel with log-distance path loss, the two protocol families
//! (decentralised key publication with on-device matching, and centralised
//! server-issued identifiers with server-side matching), a contact-driven
//! SEIR-style epidemic, and three attacks against the protocols: a passive
//! sniffer grid, identifier relay/replay, and sybil re-identification.
//!
//! Every run is a pure function of its [`ScenarioConfig`]; all randomness is
//! drawn from named sub-streams of one seed (see [`rng`]).

pub mod attacks;
pub mod clock;
pub mod config;
pub mod crypto;
pub mod epidemic;
pub mod geometry;
pub mod metrics;
pub mod protocol;
pub mod radio;
pub mod report;
pub mod rng;
pub mod sim;
pub mod world;

pub use clock::{SimClock, Tick};
pub use config::{load_scenario, ConfigError, ProtocolKind, ScenarioConfig};
pub use crypto::{DiagnosisKey, EphemeralId};
pub use sim::{run, RunOptions, RunOutput, SimError};
pub use world::AgentId;

/// Version string recorded in run manifests.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
