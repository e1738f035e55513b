//! Seed derivation.
//!
//! Every random stream is keyed by a path of integers, e.g. `(seed, replicate, set)`,
//! folded through splitmix64. Streams therefore do not depend on the order in which
//! work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key path into one 64-bit seed.
pub fn derive_seed(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x6A09_E667_F3BC_C909, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn rng_for(path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(path))
}
