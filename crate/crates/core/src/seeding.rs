//! Order-independent seed derivation.
//!
//! Every random decision in the pipeline draws from a generator keyed by the
//! run seed plus a small tuple of stable identifiers (user id, stage tag), so
//! results never depend on iteration order or thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn rng_for(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}

/// Stage tags keep streams for different protocol steps independent.
pub mod stage {
    pub const HOLDOUT: u64 = 1;
    pub const COLD_SELECT: u64 = 2;
    pub const RESTORE: u64 = 3;
    pub const RANDOM_RANKER: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
}
