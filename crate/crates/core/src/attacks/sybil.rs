//! Sybil re-identification. In decentralised mode the attacker runs
//! stationary listening accounts that keep one bucket per time window; a
//! published key matching a bucket names the window, and the person met in
//! it when the window held a single encounter. In centralised mode the same
//! attacker instead tries to register many accounts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::clock::{SimClock, Tick};
use crate::crypto::{expand_key, DiagnosisKey, EphemeralId};
use crate::geometry::{Point, SpatialGrid};
use crate::protocol::centralised::{CentralServer, SourceId};
use crate::protocol::ProtocolError;
use crate::radio::Broadcaster;

#[derive(Debug)]
pub struct SybilStations {
    positions: Vec<Point>,
    radius: f64,
    bucket_ticks: u64,
    index: SpatialGrid,
    /// (station, bucket) -> identifiers encountered.
    buckets: BTreeMap<(usize, u64), BTreeSet<EphemeralId>>,
}

/// One (bucket, published key) match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    pub station: usize,
    pub window_start: Tick,
    pub window_end: Tick,
    /// Index into the published key list.
    pub key: usize,
    pub eid: EphemeralId,
    /// Encounters sharing the window; 1 means the infected person is known.
    pub candidates: usize,
}

impl Attribution {
    pub fn is_unique(&self) -> bool {
        self.candidates == 1
    }
}

impl SybilStations {
    pub fn new(positions: Vec<Point>, radius: f64, bucket_ticks: u64, width: f64, height: f64) -> Self {
        let index = SpatialGrid::build(positions.iter().copied(), width, height, radius);
        Self { positions, radius, bucket_ticks: bucket_ticks.max(1), index, buckets: BTreeMap::new() }
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn bucket_ticks(&self) -> u64 {
        self.bucket_ticks
    }

    pub fn listen(&mut self, broadcasters: &[Broadcaster], tick: Tick) {
        let bucket = tick / self.bucket_ticks;
        for b in broadcasters {
            for s in self.index.candidates(b.position, self.radius) {
                if self.positions[s].distance(&b.position) <= self.radius {
                    self.buckets.entry((s, bucket)).or_default().insert(b.eid);
                }
            }
        }
    }

    pub fn buckets(&self) -> &BTreeMap<(usize, u64), BTreeSet<EphemeralId>> {
        &self.buckets
    }

    /// Joins published keys against the recorded buckets.
    pub fn identify(&self, published: &[DiagnosisKey]) -> Vec<Attribution> {
        let mut owner: HashMap<EphemeralId, usize> = HashMap::new();
        for (k, key) in published.iter().enumerate() {
            for eid in expand_key(key) {
                owner.insert(eid, k);
            }
        }
        let mut out = Vec::new();
        for (&(station, bucket), eids) in &self.buckets {
            let mut seen = BTreeSet::new();
            for eid in eids {
                if let Some(&k) = owner.get(eid) {
                    if seen.insert(k) {
                        out.push(Attribution {
                            station,
                            window_start: bucket * self.bucket_ticks,
                            window_end: (bucket + 1) * self.bucket_ticks,
                            key: k,
                            eid: *eid,
                            candidates: eids.len(),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SybilRegistration {
    pub granted: usize,
    pub denied_rate_limit: usize,
    pub denied_challenge: usize,
}

/// `attempts` registrations from one network source, each with an honestly
/// solved challenge.
pub fn register_sybils(server: &mut CentralServer, source: SourceId, attempts: usize, clock: &SimClock) -> SybilRegistration {
    let mut out = SybilRegistration::default();
    for _ in 0..attempts {
        let token = server.issue_challenge().solve();
        match server.register_user(source, &token, clock) {
            Ok(_) => out.granted += 1,
            Err(ProtocolError::RateLimited(_)) => out.denied_rate_limit += 1,
            Err(_) => out.denied_challenge += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::derive_ephemeral_id;
    use crate::world::AgentId;

    fn key(b: u8) -> DiagnosisKey {
        DiagnosisKey { day_index: 0, key_bytes: [b; 16] }
    }

    fn at(agent: usize, x: f64, eid: EphemeralId) -> Broadcaster {
        Broadcaster { agent: AgentId(agent), position: Point::new(x, 0.0), eid }
    }

    #[test]
    fn single_encounter_is_unique_attribution() {
        let mut s = SybilStations::new(vec![Point::new(0.0, 0.0)], 5.0, 15, 100.0, 100.0);
        let k = key(1);
        s.listen(&[at(0, 1.0, derive_ephemeral_id(&k, 0).unwrap())], 3);
        let a = s.identify(&[k]);
        assert_eq!(a.len(), 1);
        assert!(a[0].is_unique());
        assert_eq!((a[0].window_start, a[0].window_end), (0, 15));
    }

    #[test]
    fn two_infected_in_one_window_is_ambiguous() {
        let mut s = SybilStations::new(vec![Point::new(0.0, 0.0)], 5.0, 15, 100.0, 100.0);
        let (k1, k2) = (key(1), key(2));
        s.listen(
            &[at(0, 1.0, derive_ephemeral_id(&k1, 0).unwrap()), at(1, 2.0, derive_ephemeral_id(&k2, 0).unwrap())],
            4,
        );
        let a = s.identify(&[k1, k2]);
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|x| x.candidates == 2 && !x.is_unique()));
    }

    #[test]
    fn far_devices_are_not_encounters() {
        let mut s = SybilStations::new(vec![Point::new(0.0, 0.0)], 5.0, 15, 100.0, 100.0);
        let k = key(1);
        s.listen(&[at(0, 9.0, derive_ephemeral_id(&k, 0).unwrap())], 0);
        assert!(s.identify(&[k]).is_empty());
    }
}
