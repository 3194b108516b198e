//! Deterministic seed derivation.
//!
//! Every randomized component takes an explicit RNG or a 64-bit seed.
//! Independent streams (one per Monte Carlo trial, one per sweep point) are
//! derived from a master seed with the SplitMix64 finalizer, so results are
//! reproducible bit-for-bit regardless of execution order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `master`.
///
/// The rule is `mix64(master ^ mix64(index + 1))`; nested calls give
/// per-sweep-point, per-trial streams.
#[inline]
pub fn child_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(1)))
}

/// The crate-standard RNG for a given seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
