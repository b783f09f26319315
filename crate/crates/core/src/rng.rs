//! Seed-derived random streams.
//!
//! Every stochastic step draws from its own generator keyed by the master
//! seed plus a path of stream ids (trial id, fold, ratio index, ...). Work
//! can therefore be scheduled in any order without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of stream ids into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &id| {
        splitmix64(acc.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ id)
    })
}

/// Generator for the stream identified by `path` under `master`.
pub fn stream(master: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Well-known stream tags so unrelated consumers of one seed never collide.
pub mod tag {
    pub const GENERATE: u64 = 1;
    pub const NOISE_INJECT: u64 = 2;
    pub const FOLDS: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const AUGMENT: u64 = 6;
    pub const TEST_SET: u64 = 7;
    pub const RANDOM_PRUNE: u64 = 8;
    pub const PROTOTYPES: u64 = 9;
    pub const PIPELINE_NOISE: u64 = 10;
    pub const AUX_MODEL: u64 = 11;
}
