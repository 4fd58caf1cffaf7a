//! Seeded, operation-keyed random streams.
//!
//! One user-facing 64-bit seed drives every random choice. Each operation
//! draws from its own ChaCha stream selected by hashing the operation name,
//! so sampling the same manifest in two different ways never correlates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the bytes of `key`.
pub fn fnv1a(key: &str) -> u64 {
    key.bytes().fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Stream for `operation` under `seed`.
pub fn stream(seed: u64, operation: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(operation));
    rng
}

/// Stream for the `index`-th independent sub-task of `operation`
/// (bootstrap replicates, per-stratum draws, ...).
pub fn substream(seed: u64, operation: &str, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(operation).wrapping_add(index));
    rng
}
