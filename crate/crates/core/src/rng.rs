//! Seed handling.
//!
//! Every randomized stage draws from its own ChaCha stream. Streams are keyed by
//! a parent seed plus a counter (`derive_seed`), so adding a stage never shifts
//! the draws of another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `stream` under `parent`.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Child seed keyed by a path of counters, e.g. `(node, rate index, direction)`.
pub fn derive_seed_path(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |acc, &s| derive_seed(acc, s))
}

/// Stage identifiers used when deriving per-repetition sub-seeds.
pub mod stream {
    pub const SPLIT_TARGET: u64 = 1;
    pub const SPLIT_SHADOW: u64 = 2;
    pub const TRAIN_TARGET: u64 = 3;
    pub const TRAIN_SHADOW: u64 = 4;
    pub const FEATURES_SHADOW: u64 = 5;
    pub const FEATURES_TARGET: u64 = 6;
    pub const ATTACK_HOLDOUT: u64 = 7;
    pub const ATTACK_MODEL: u64 = 8;
    /// Baseline `k` uses `BASELINE_BASE + k`.
    pub const BASELINE_BASE: u64 = 16;
}
