//! Seed derivation for independent, reproducible RNG streams.
//!
//! Every unit of parallel work (a slide, a fold, a learning-curve cell) gets
//! its own ChaCha stream keyed by a seed mixed from `(base seed, ids...)`, so
//! results never depend on which worker ran the item or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of stream identifiers.
pub fn derive_seed(base: u64, ids: &[u64]) -> u64 {
    ids.iter().fold(mix64(base), |acc, &id| mix64(acc ^ mix64(id)))
}

/// A counter-based deterministic generator for the given stream.
pub fn stream(base: u64, ids: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, ids))
}
