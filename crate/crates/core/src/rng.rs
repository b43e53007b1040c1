//! Deterministic seed derivation.
//!
//! Every randomized stage (dataset sample, Monte-Carlo trial, epoch shuffle)
//! derives its own seed from a master seed plus integer tags, so results are
//! reproducible regardless of how work is split across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keeping the independent random streams apart.
pub mod stream {
    pub const DATASET: u64 = 0x01;
    pub const SWEEP: u64 = 0x02;
    pub const TRAIN_INIT: u64 = 0x03;
    pub const TRAIN_SPLIT: u64 = 0x04;
    pub const TRAIN_EPOCH: u64 = 0x05;
    pub const COMPLEXITY: u64 = 0x06;
    pub const REPORT: u64 = 0x07;
}

/// splitmix64 finalizer; good avalanche for cheap seed mixing.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a tag path.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = mix(master);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    state
}

/// Portable deterministic generator for a derived seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
