//! Seed derivation.
//!
//! Every random stream in the simulator is keyed by the master seed plus a
//! short tuple of identifiers (animal id, client id, round, ...). Streams never
//! depend on scheduling order, which is what makes parallel runs reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags so that two streams keyed by the same ids never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Animal = 2,
    Weighing = 3,
    Split = 4,
    Shuffle = 5,
    LocalInit = 6,
    Forecast = 7,
    Validation = 8,
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, ids: &[u64]) -> u64 {
    let mut acc = mix(master ^ mix(stream as u64));
    for &id in ids {
        acc = mix(acc ^ mix(id));
    }
    acc
}

pub fn stream_rng(master: u64, stream: Stream, ids: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, stream, ids))
}
