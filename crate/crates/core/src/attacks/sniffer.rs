//! Passive sniffer grid: fixed stations log every identifier they hear with
//! their own position. Once diagnosis keys are published, the log turns into
//! routes of the diagnosed users.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::clock::Tick;
use crate::crypto::{expand_key, DiagnosisKey, EphemeralId};
use crate::geometry::{Point, SpatialGrid};
use crate::radio::Broadcaster;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnifferObservation {
    pub eid: EphemeralId,
    pub sniffer_pos: Point,
    pub tick: Tick,
}

#[derive(Debug)]
pub struct SnifferGrid {
    positions: Vec<Point>,
    range: f64,
    index: SpatialGrid,
    /// Observations keyed by identifier: (tick, sniffer index).
    log: HashMap<EphemeralId, Vec<(u32, u32)>>,
    count: usize,
}

impl SnifferGrid {
    pub fn new(positions: Vec<Point>, range: f64, width: f64, height: f64) -> Self {
        let index = SpatialGrid::build(positions.iter().copied(), width, height, range);
        Self { positions, range, index, log: HashMap::new(), count: 0 }
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Whether `p` is within range of at least one sniffer.
    pub fn covers(&self, p: Point) -> bool {
        self.index.candidates(p, self.range).into_iter().any(|s| self.positions[s].distance(&p) <= self.range)
    }

    /// One observation per (sniffer, broadcaster) pair within range.
    pub fn sniff_round(&mut self, broadcasters: &[Broadcaster], tick: Tick) -> Vec<SnifferObservation> {
        let mut out = Vec::new();
        for b in broadcasters {
            for s in self.index.candidates(b.position, self.range) {
                let pos = self.positions[s];
                if pos.distance(&b.position) <= self.range {
                    self.log.entry(b.eid).or_default().push((tick as u32, s as u32));
                    out.push(SnifferObservation { eid: b.eid, sniffer_pos: pos, tick });
                }
            }
        }
        self.count += out.len();
        out
    }

    pub fn observation_count(&self) -> usize {
        self.count
    }

    pub fn observations_of(&self, eid: &EphemeralId) -> Vec<SnifferObservation> {
        self.log
            .get(eid)
            .map(|v| {
                v.iter()
                    .map(|&(t, s)| SnifferObservation { eid: *eid, sniffer_pos: self.positions[s as usize], tick: t as Tick })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Observations whose identifier is in `eids`.
    pub fn count_matching<'a>(&self, eids: impl IntoIterator<Item = &'a EphemeralId>) -> usize {
        eids.into_iter().map(|e| self.log.get(e).map_or(0, Vec::len)).sum()
    }

    /// Expands every published key and joins it against the log.
    pub fn reconstruct_tracks(&self, published: &[DiagnosisKey]) -> Vec<Track> {
        published
            .iter()
            .map(|key| {
                let mut points: Vec<TrackPoint> = expand_key(key)
                    .iter()
                    .flat_map(|eid| self.observations_of(eid))
                    .map(|o| TrackPoint { tick: o.tick, eid: o.eid, sniffer_pos: o.sniffer_pos })
                    .collect();
                points.sort_by(|a, b| {
                    a.tick
                        .cmp(&b.tick)
                        .then(a.sniffer_pos.x.total_cmp(&b.sniffer_pos.x))
                        .then(a.sniffer_pos.y.total_cmp(&b.sniffer_pos.y))
                });
                Track { key: *key, points }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub tick: Tick,
    pub eid: EphemeralId,
    pub sniffer_pos: Point,
}

/// Route recovered for one published key, ordered by tick.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub key: DiagnosisKey,
    pub points: Vec<TrackPoint>,
}

impl Track {
    pub fn ticks(&self) -> BTreeSet<Tick> {
        self.points.iter().map(|p| p.tick).collect()
    }
}

/// Matched ticks over ticks spent inside sniffer coverage; 0 when the victim
/// never entered coverage.
pub fn coverage(matched_ticks: usize, in_range_ticks: usize) -> f64 {
    if in_range_ticks == 0 {
        0.0
    } else {
        matched_ticks as f64 / in_range_ticks as f64
    }
}
