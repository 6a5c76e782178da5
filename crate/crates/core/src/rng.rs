//! Seeded random streams.
//!
//! Every consumer of randomness (partitioning, initialization, client
//! sampling, per-client batch shuffling) draws from its own ChaCha stream
//! keyed by `(experiment seed, purpose, a, b)`. Streams never share state, so
//! the order in which clients execute cannot change what any of them draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Partition = 2,
    Split = 3,
    Sampling = 4,
    LocalTrain = 5,
    FineTune = 6,
    Synthetic = 7,
    GradCheck = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, purpose, a, b)`.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed ^ splitmix64(purpose as u64)) ^ a) ^ b);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(purpose as u64);
    rng
}
