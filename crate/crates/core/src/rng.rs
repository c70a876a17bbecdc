//! Seeding discipline.
//!
//! Every experiment has one root seed. Work unit `k` (a replication, a
//! convergence seed, a verification battery) draws from the ChaCha stream
//! `k` of that root, so results never depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Root generator: stream 0 of `seed`.
pub fn root_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for work unit `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
