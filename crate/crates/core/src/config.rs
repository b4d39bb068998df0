//! Scenario configuration: a flat TOML document with four optional sections
//! (`[radio]`, `[epidemic]`, `[tracing]`, `[attack]`). Every key has a
//! default; see the README for the full key list.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{AttackConfig, AttackKind};
use crate::clock::{DAY_SECONDS, INTERVAL_SECONDS};
use crate::crypto::EphemeralId;
use crate::epidemic::EpidemicParams;
use crate::protocol::TracingParams;
use crate::radio::RadioParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    #[default]
    Decentralised,
    Centralised,
}

impl ProtocolKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolKind::Decentralised => "decentralised",
            ProtocolKind::Centralised => "centralised",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decentralised" | "decentralized" => Ok(ProtocolKind::Decentralised),
            "centralised" | "centralized" => Ok(ProtocolKind::Centralised),
            other => Err(ConfigError::Invalid { key: "protocol".into(), reason: format!("unknown protocol `{other}`") }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub world_width_m: f64,
    pub world_height_m: f64,
    pub n_agents: usize,
    pub adoption_fraction: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    /// Pause drawn on each waypoint arrival.
    pub pause_min_s: f64,
    pub pause_max_s: f64,
    /// Number of gathering points (0 = plain uniform waypoints).
    pub venues: usize,
    pub venue_probability: f64,
    pub venue_radius_m: f64,
    pub step_seconds: u64,
    pub duration_days: u64,
    pub rng_seed: u64,
    pub protocol: ProtocolKind,
    pub radio: RadioParams,
    pub epidemic: EpidemicParams,
    pub tracing: TracingParams,
    pub attack: AttackConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            world_width_m: 500.0,
            world_height_m: 500.0,
            n_agents: 100,
            adoption_fraction: 1.0,
            speed_min_mps: 0.5,
            speed_max_mps: 1.5,
            pause_min_s: 0.0,
            pause_max_s: 0.0,
            venues: 0,
            venue_probability: 0.5,
            venue_radius_m: 3.0,
            step_seconds: 60,
            duration_days: 14,
            rng_seed: 1,
            protocol: ProtocolKind::Decentralised,
            radio: RadioParams::default(),
            epidemic: EpidemicParams::default(),
            tracing: TracingParams::default(),
            attack: AttackConfig::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
}

/// Keys absent from the serialized default because their default is unset.
const OPTIONAL_KEYS: &[&str] = &["attack.sniffer_range_m", "attack.relay_follow_agent"];

/// Every dotted key the document format accepts.
pub fn known_keys() -> BTreeSet<String> {
    let table = toml::Table::try_from(ScenarioConfig::default()).expect("default config serializes");
    let mut keys = BTreeSet::new();
    flatten("", &table, &mut keys);
    keys.extend(OPTIONAL_KEYS.iter().map(|k| k.to_string()));
    keys
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeSet<String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            _ => {
                out.insert(key);
            }
        }
    }
}

/// Parses a `key=value` override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| invalid(key, format!("`{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Accepts `adoption` as shorthand for `adoption_fraction`.
pub fn canonical_key(key: &str) -> &str {
    match key {
        "adoption" => "adoption_fraction",
        "seed" => "rng_seed",
        other => other,
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    load_scenario_with_overrides(text, &[])
}

/// Parses a document, applies dotted `key=value` overrides on top, then
/// validates the result.
pub fn load_scenario_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let known = known_keys();
    let mut present = BTreeSet::new();
    flatten("", &table, &mut present);
    if let Some(bad) = present.iter().find(|k| !known.contains(*k)) {
        return Err(ConfigError::UnknownKey(bad.clone()));
    }
    for (k, v) in overrides {
        let key = canonical_key(k.trim());
        if !known.contains(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        set_dotted(&mut table, key, parse_value(v.trim()))?;
    }
    let cfg: ScenarioConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn check_fraction(key: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} not in [0, 1]")))
    }
}

fn check_positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} must be > 0")))
    }
}

fn check_non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} must be >= 0")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_positive("world_width_m", self.world_width_m)?;
        check_positive("world_height_m", self.world_height_m)?;
        check_fraction("adoption_fraction", self.adoption_fraction)?;
        check_non_negative("speed_min_mps", self.speed_min_mps)?;
        check_non_negative("speed_max_mps", self.speed_max_mps)?;
        if self.speed_min_mps > self.speed_max_mps {
            return Err(invalid("speed_min_mps", "must not exceed speed_max_mps"));
        }
        check_non_negative("pause_min_s", self.pause_min_s)?;
        check_non_negative("pause_max_s", self.pause_max_s)?;
        if self.pause_min_s > self.pause_max_s {
            return Err(invalid("pause_min_s", "must not exceed pause_max_s"));
        }
        check_fraction("venue_probability", self.venue_probability)?;
        check_non_negative("venue_radius_m", self.venue_radius_m)?;
        if self.step_seconds == 0 || !INTERVAL_SECONDS.is_multiple_of(self.step_seconds) {
            return Err(invalid("step_seconds", format!("{} must divide {INTERVAL_SECONDS}", self.step_seconds)));
        }
        if self.duration_days == 0 {
            return Err(invalid("duration_days", "must be > 0"));
        }

        let r = &self.radio;
        check_positive("radio.max_range_m", r.max_range_m)?;
        check_positive("radio.path_loss_exponent", r.path_loss_exponent)?;
        check_non_negative("radio.noise_sigma_db", r.noise_sigma_db)?;

        let e = &self.epidemic;
        check_fraction("epidemic.p_transmit_per_contact_minute", e.p_transmit_per_contact_minute)?;
        check_positive("epidemic.infection_radius_m", e.infection_radius_m)?;
        check_positive("epidemic.incubation_days", e.incubation_days)?;
        check_positive("epidemic.infectious_days", e.infectious_days)?;
        check_positive("epidemic.test_delay_days", e.test_delay_days)?;
        check_fraction("epidemic.quarantine_compliance", e.quarantine_compliance)?;
        check_non_negative("epidemic.quarantine_days", e.quarantine_days)?;
        check_fraction("epidemic.quarantined_transmit_factor", e.quarantined_transmit_factor)?;
        if let Some(bad) = e.initial_infected_ids.iter().find(|&&i| i >= self.n_agents) {
            return Err(invalid("epidemic.initial_infected_ids", format!("agent {bad} out of range")));
        }

        let t = &self.tracing;
        check_fraction("tracing.reporting_probability", t.reporting_probability)?;
        check_positive("tracing.proximity_threshold_m", t.proximity_threshold_m)?;
        check_non_negative("tracing.exposure_minutes_threshold", t.exposure_minutes_threshold)?;
        if t.poll_interval_s == 0 || !t.poll_interval_s.is_multiple_of(self.step_seconds) || !DAY_SECONDS.is_multiple_of(t.poll_interval_s) {
            return Err(invalid("tracing.poll_interval_s", "must be a multiple of step_seconds dividing 24 h"));
        }
        for h in &t.blacklist {
            EphemeralId::from_hex(h).map_err(|_| invalid("tracing.blacklist", format!("bad identifier `{h}`")))?;
        }

        let a = &self.attack;
        match a.kind {
            AttackKind::None => {}
            AttackKind::Sniffer => {
                if a.sniffer_rows == 0 || a.sniffer_cols == 0 {
                    return Err(invalid("attack.sniffer_rows", "grid must be at least 1x1"));
                }
                if let Some(r) = a.sniffer_range_m {
                    check_positive("attack.sniffer_range_m", r)?;
                }
            }
            AttackKind::Relay => {
                check_non_negative("attack.relay_capture_radius_m", a.relay_capture_radius_m)?;
                check_positive("attack.relay_distance_m", a.relay_distance_m)?;
                if let Some(f) = a.relay_follow_agent {
                    if f >= self.n_agents {
                        return Err(invalid("attack.relay_follow_agent", format!("agent {f} out of range")));
                    }
                }
                if let Some(bad) = a.relay_targets.iter().find(|&&i| i >= self.n_agents) {
                    return Err(invalid("attack.relay_targets", format!("agent {bad} out of range")));
                }
            }
            AttackKind::Sybil => {
                if a.sybil_rows == 0 || a.sybil_cols == 0 {
                    return Err(invalid("attack.sybil_rows", "grid must be at least 1x1"));
                }
                if a.sybil_bucket_seconds == 0 || !a.sybil_bucket_seconds.is_multiple_of(self.step_seconds) {
                    return Err(invalid("attack.sybil_bucket_seconds", "must be a positive multiple of step_seconds"));
                }
                check_positive("attack.sybil_encounter_radius_m", a.sybil_encounter_radius_m)?;
            }
        }
        Ok(())
    }

    pub fn n_ticks(&self) -> u64 {
        self.duration_days * DAY_SECONDS / self.step_seconds
    }

    pub fn blacklist(&self) -> Vec<EphemeralId> {
        self.tracing.blacklist.iter().filter_map(|h| EphemeralId::from_hex(h).ok()).collect()
    }

    /// Whether two configs describe the same scenario apart from protocol.
    pub fn same_scenario(&self, other: &ScenarioConfig) -> bool {
        let mut b = other.clone();
        b.protocol = self.protocol;
        *self == b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = load_scenario("world_width_m = 800\nworld_height_m = 600\nn_agents = 42\n").unwrap();
        assert_eq!((cfg.world_width_m, cfg.world_height_m, cfg.n_agents), (800.0, 600.0, 42));
        let d = ScenarioConfig::default();
        assert_eq!(cfg.step_seconds, 60);
        assert_eq!(cfg.radio, d.radio);
        assert_eq!(cfg.tracing, d.tracing);
        assert_eq!(cfg.radio.max_range_m, 50.0);
        assert_eq!(cfg.tracing.exposure_minutes_threshold, 15.0);
    }

    #[test]
    fn adoption_out_of_range_names_key() {
        let err = load_scenario("adoption_fraction = 1.5").unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "adoption_fraction"), "{err}");
    }

    #[test]
    fn sniffer_grid_values_echo() {
        let cfg = load_scenario("world_width_m = 1500\nworld_height_m = 1500\nn_agents = 300\n[attack]\nkind = \"sniffer\"\n").unwrap();
        assert_eq!((cfg.world_width_m, cfg.world_height_m, cfg.n_agents), (1500.0, 1500.0, 300));
        assert_eq!((cfg.attack.sniffer_rows, cfg.attack.sniffer_cols), (20, 20));
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(load_scenario("n_agents = = 3"), Err(ConfigError::Parse(_))));
        assert!(matches!(load_scenario("n_agents = \"many\""), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn unknown_keys_are_named() {
        assert_eq!(load_scenario("n_agent = 3"), Err(ConfigError::UnknownKey("n_agent".into())));
        assert_eq!(load_scenario("[radio]\nrange = 3"), Err(ConfigError::UnknownKey("radio.range".into())));
        let err = load_scenario_with_overrides("", &[("radio.nois".into(), "1".into())]).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("radio.nois".into()));
    }

    #[test]
    fn overrides_apply() {
        let cfg = load_scenario_with_overrides(
            "",
            &[
                ("radio.noise_sigma_db".into(), "0".into()),
                ("adoption".into(), "0.4".into()),
                ("protocol".into(), "centralised".into()),
                ("attack.relay_follow_agent".into(), "3".into()),
                ("attack.kind".into(), "relay".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.radio.noise_sigma_db, 0.0);
        assert_eq!(cfg.adoption_fraction, 0.4);
        assert_eq!(cfg.protocol, ProtocolKind::Centralised);
        assert_eq!(cfg.attack.relay_follow_agent, Some(3));
    }

    #[test]
    fn step_must_divide_interval() {
        let err = load_scenario("step_seconds = 7").unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "step_seconds"));
        assert!(load_scenario("step_seconds = 300").is_ok());
    }

    #[test]
    fn speed_order_enforced() {
        assert!(load_scenario("speed_min_mps = 3\nspeed_max_mps = 1").is_err());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let d = ScenarioConfig::default();
        let text = toml::to_string(&d).unwrap();
        assert_eq!(load_scenario(&text).unwrap(), d);
    }
}
