//! Named random sub-streams split from the single scenario seed.
//!
//! Each consumer draws from its own ChaCha stream so that, for example,
//! enabling an attack never shifts the mobility or epidemic draws.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// One ChaCha stream per agent.
    Mobility,
    Adoption,
    /// Venue placement.
    Venues,
    Epidemic,
    Quarantine,
    Radio,
    /// Per-device secret key material.
    DeviceKeys,
    /// Consent draws and server-side secrets.
    Protocol,
    Attack,
}

impl Stream {
    fn tag(self) -> &'static [u8] {
        match self {
            Stream::Mobility => b"mobility",
            Stream::Adoption => b"adoption",
            Stream::Venues => b"venues",
            Stream::Epidemic => b"epidemic",
            Stream::Quarantine => b"quarantine",
            Stream::Radio => b"radio",
            Stream::DeviceKeys => b"device-keys",
            Stream::Protocol => b"protocol",
            Stream::Attack => b"attack",
        }
    }
}

/// Returns sub-stream `index` of the named stream for `seed`.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> SimRng {
    let mut hasher = Sha256::new();
    hasher.update(b"tracesim-rng-v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(stream.tag());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = SimRng::from_seed(key);
    rng.set_stream(index);
    rng
}
