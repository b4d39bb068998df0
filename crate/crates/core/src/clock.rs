//! Simulation time.

use serde::{Deserialize, Serialize};

pub type Tick = u64;

/// Identifier rotation period.
pub const INTERVAL_SECONDS: u64 = 900;
pub const DAY_SECONDS: u64 = 86_400;
/// 24 h / 15 min.
pub const INTERVALS_PER_DAY: u32 = (DAY_SECONDS / INTERVAL_SECONDS) as u32;
/// Identifiers, keys and contact records older than this are discarded.
pub const RETENTION_DAYS: u64 = 14;
pub const RETENTION_SECONDS: u64 = RETENTION_DAYS * DAY_SECONDS;

/// Tick counter plus the tick length; every derived index is a pure function
/// of the two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    tick: Tick,
    step_seconds: u64,
}

impl SimClock {
    pub fn new(step_seconds: u64) -> Self {
        Self::at(0, step_seconds)
    }

    pub fn at(tick: Tick, step_seconds: u64) -> Self {
        assert!(step_seconds > 0, "step_seconds must be positive");
        Self { tick, step_seconds }
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn step_seconds(&self) -> u64 {
        self.step_seconds
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }

    pub fn elapsed_seconds(&self) -> u64 {
        self.tick * self.step_seconds
    }

    pub fn seconds_at(&self, tick: Tick) -> u64 {
        tick * self.step_seconds
    }

    /// Global 15-minute interval counter.
    pub fn interval_index(&self) -> u64 {
        self.elapsed_seconds() / INTERVAL_SECONDS
    }

    pub fn day_index(&self) -> u64 {
        self.elapsed_seconds() / DAY_SECONDS
    }

    pub fn day_of(&self, tick: Tick) -> u64 {
        self.seconds_at(tick) / DAY_SECONDS
    }

    /// Interval within the current day, `0..96`.
    pub fn interval_in_day(&self) -> u32 {
        (self.interval_index() % INTERVALS_PER_DAY as u64) as u32
    }

    pub fn ticks_per_interval(&self) -> u64 {
        INTERVAL_SECONDS / self.step_seconds
    }

    pub fn ticks_per_day(&self) -> u64 {
        DAY_SECONDS / self.step_seconds
    }

    /// Converts a duration to whole ticks, rounding to nearest.
    pub fn ticks_for_seconds(&self, seconds: f64) -> u64 {
        (seconds / self.step_seconds as f64).round().max(0.0) as u64
    }

    pub fn is_day_boundary(&self) -> bool {
        self.elapsed_seconds().is_multiple_of(DAY_SECONDS)
    }

    /// Whether `stamp` is older than the retention window at this instant.
    pub fn is_expired(&self, stamp: Tick) -> bool {
        self.elapsed_seconds()
            .saturating_sub(self.seconds_at(stamp))
            > RETENTION_SECONDS
    }
}
