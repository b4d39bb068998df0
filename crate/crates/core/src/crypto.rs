//! Identifier lifecycle: per-day diagnosis keys and the 15-minute ephemeral
//! identifiers derived from them.
//!
//! Derivation (stable across versions, pinned by a golden file):
//!
//! ```text
//! EID(key, i) = HMAC-SHA256(key_bytes, "tracesim-eid-v1" || u16_be(i))[0..16]
//! ```

use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::clock::{SimClock, Tick, INTERVALS_PER_DAY};

pub const KEY_LEN: usize = 16;
pub const EID_LEN: usize = 16;
const EID_LABEL: &[u8] = b"tracesim-eid-v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("interval {0} outside 0..{INTERVALS_PER_DAY}")]
    IntervalOutOfRange(u32),
    #[error("invalid hex identifier: {0}")]
    BadHex(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EphemeralId(pub [u8; EID_LEN]);

impl EphemeralId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s.trim()).map_err(|_| CryptoError::BadHex(s.to_string()))?;
        let arr: [u8; EID_LEN] = bytes.try_into().map_err(|_| CryptoError::BadHex(s.to_string()))?;
        Ok(Self(arr))
    }
}

impl fmt::Debug for EphemeralId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Eid({})", self.to_hex())
    }
}

impl fmt::Display for EphemeralId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Per-day secret. One per (device, day); uploaded on positive diagnosis.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiagnosisKey {
    pub day_index: u64,
    pub key_bytes: [u8; KEY_LEN],
}

impl fmt::Debug for DiagnosisKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiagnosisKey(day {}, {})", self.day_index, hex::encode(self.key_bytes))
    }
}

impl DiagnosisKey {
    pub fn generate(day_index: u64, rng: &mut impl RngCore) -> Self {
        let mut key_bytes = [0u8; KEY_LEN];
        rng.fill_bytes(&mut key_bytes);
        Self { day_index, key_bytes }
    }

    /// Start of the validity window of interval `interval_in_day`, in seconds.
    pub fn interval_start_seconds(&self, interval_in_day: u32) -> u64 {
        crate::clock::DAY_SECONDS * self.day_index
            + crate::clock::INTERVAL_SECONDS * interval_in_day as u64
    }
}

pub fn derive_ephemeral_id(key: &DiagnosisKey, interval_in_day: u32) -> Result<EphemeralId, CryptoError> {
    if interval_in_day >= INTERVALS_PER_DAY {
        return Err(CryptoError::IntervalOutOfRange(interval_in_day));
    }
    Ok(prf(&key.key_bytes, interval_in_day as u16))
}

fn prf(key: &[u8], interval: u16) -> EphemeralId {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(EID_LABEL);
    mac.update(&interval.to_be_bytes());
    let tag = mac.finalize().into_bytes();
    let mut id = [0u8; EID_LEN];
    id.copy_from_slice(&tag[..EID_LEN]);
    EphemeralId(id)
}

/// All 96 identifiers of a key's day, in interval order.
pub fn expand_key(key: &DiagnosisKey) -> Vec<EphemeralId> {
    (0..INTERVALS_PER_DAY as u16).map(|i| prf(&key.key_bytes, i)).collect()
}

/// Anything stored with a tick stamp and subject to the 14-day retention.
pub trait Timestamped {
    fn timestamp(&self) -> Tick;
}

impl Timestamped for (Tick, EphemeralId) {
    fn timestamp(&self) -> Tick {
        self.0
    }
}

/// Drops every entry older than the retention window; keeps everything else
/// in its original order.
pub fn retention_prune<T: Timestamped>(mut store: Vec<T>, now: &SimClock) -> Vec<T> {
    store.retain(|e| !now.is_expired(e.timestamp()));
    store
}

/// Writes the golden-file block for `key`: the key in hex, then its 96
/// identifiers, one per line.
pub fn golden_block(key: &DiagnosisKey) -> String {
    let mut out = hex::encode(key.key_bytes);
    out.push('\n');
    for eid in expand_key(key) {
        out.push_str(&eid.to_hex());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::DAY_SECONDS;
    use crate::rng::{stream_rng, Stream};
    use std::collections::HashSet;

    fn key(seed: u8) -> DiagnosisKey {
        DiagnosisKey { day_index: 0, key_bytes: [seed; KEY_LEN] }
    }

    #[test]
    fn derivation_is_deterministic() {
        let k = key(3);
        assert_eq!(derive_ephemeral_id(&k, 17).unwrap(), derive_ephemeral_id(&k, 17).unwrap());
    }

    #[test]
    fn interval_out_of_range_is_rejected() {
        assert_eq!(derive_ephemeral_id(&key(1), 96), Err(CryptoError::IntervalOutOfRange(96)));
    }

    #[test]
    fn one_day_has_96_distinct_ids() {
        let ids = expand_key(&key(9));
        assert_eq!(ids.len(), 96);
        let set: HashSet<_> = ids.iter().collect();
        assert_eq!(set.len(), 96);
        for (i, id) in ids.iter().enumerate() {
            assert_eq!(*id, derive_ephemeral_id(&key(9), i as u32).unwrap());
        }
    }

    #[test]
    fn distinct_keys_give_disjoint_ids() {
        let mut rng = stream_rng(1, Stream::DeviceKeys, 0);
        for _ in 0..1000 {
            let a = DiagnosisKey::generate(0, &mut rng);
            let b = DiagnosisKey::generate(0, &mut rng);
            let sa: HashSet<_> = expand_key(&a).into_iter().collect();
            assert!(expand_key(&b).iter().all(|id| !sa.contains(id)));
        }
    }

    #[test]
    fn no_byte_position_constant_across_a_day() {
        let mut rng = stream_rng(2, Stream::DeviceKeys, 0);
        for _ in 0..20 {
            let ids = expand_key(&DiagnosisKey::generate(4, &mut rng));
            for pos in 0..EID_LEN {
                assert!(ids.iter().any(|id| id.0[pos] != ids[0].0[pos]), "byte {pos} constant");
            }
        }
    }

    #[test]
    fn derivation_depends_on_every_key_byte() {
        let base = key(0x5a);
        let reference = derive_ephemeral_id(&base, 0).unwrap();
        for i in 0..KEY_LEN {
            let mut k = base;
            k.key_bytes[i] ^= 1;
            assert_ne!(derive_ephemeral_id(&k, 0).unwrap(), reference);
        }
    }

    #[test]
    fn prune_boundaries() {
        let step = 60;
        let now = SimClock::at(20 * DAY_SECONDS / step, step);
        let just_outside = now.tick() - RETENTION - 1;
        let inside = now.tick() - (13 * 24 + 23) * 3600 / step;
        let exact = now.tick() - RETENTION;
        let e = EphemeralId([0; 16]);
        let store = vec![(just_outside, e), (inside, e), (exact, e)];
        let pruned = retention_prune(store, &now);
        assert_eq!(pruned, vec![(inside, e), (exact, e)]);
        assert_eq!(retention_prune(pruned.clone(), &now), pruned);
    }

    const RETENTION: u64 = 14 * 1440;

    #[test]
    fn hex_roundtrip() {
        let id = derive_ephemeral_id(&key(7), 5).unwrap();
        assert_eq!(EphemeralId::from_hex(&id.to_hex()).unwrap(), id);
        assert!(EphemeralId::from_hex("abc").is_err());
    }
}
