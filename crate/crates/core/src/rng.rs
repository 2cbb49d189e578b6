//! Seeded random source shared by every sampling operation.
//!
//! The generator is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), seeded
//! through `SeedableRng::seed_from_u64`. Index draws use `rand`'s uniform
//! integer sampler. Both algorithms are fixed by the pinned crate versions, so
//! a given `(inputs, seed)` pair yields the same output on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform index in `0..len`. `len` must be positive.
pub(crate) fn index(rng: &mut SeededRng, len: usize) -> usize {
    debug_assert!(len > 0);
    rng.random_range(0..len)
}

/// Uniform integer in `0..bound`. `bound` must be positive.
pub(crate) fn below(rng: &mut SeededRng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    rng.random_range(0..bound)
}
