//! Seed derivation. Every stochastic step draws from a ChaCha stream whose
//! seed is derived from the global seed plus a path of identifiers, so runs
//! are reproducible independently of iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parts` into `seed`. Stable across platforms and releases.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(seed: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, parts))
}

/// Stream labels, so different consumers of the same seed never collide.
pub(crate) mod stream {
    pub const INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const GENERATE: u64 = 3;
    pub const OVERSAMPLE: u64 = 4;
    pub const AUGMENT: u64 = 5;
    pub const PLAN: u64 = 6;
    pub const CANDIDATES: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const DROPOUT: u64 = 9;
}
