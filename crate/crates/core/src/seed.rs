//! Deterministic seed streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of tags. Distinct paths give
/// independent streams, so training and evaluation never share tasks.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used across the crate.
pub mod stream {
    pub const TRAIN_TASK: u64 = 0x7452_4149;
    pub const EVAL_TASK: u64 = 0x4556_414c;
    pub const QUERY_PLAN: u64 = 0x504c_414e;
    pub const OPTIMIZER: u64 = 0x4f50_5449;
    pub const LABEL: u64 = 0x4c41_4245;
    pub const NET_INIT: u64 = 0x494e_4954;
    pub const SELECT: u64 = 0x5345_4c45;
}
