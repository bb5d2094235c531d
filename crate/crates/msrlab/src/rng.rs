//! Deterministic stream splitting for reproducible randomness.
//!
//! Every stochastic component (shape sampling, noise, weight init, batch
//! shuffling) draws from its own ChaCha8 stream whose key is derived from a
//! master seed and a stream index through SplitMix64 mixing. Streams are
//! independent of evaluation order, so e.g. dataset records can be generated
//! by any number of workers in any order with identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer: a bijective mixer with full avalanche.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the key for substream `index` of `master`.
///
/// Distinct `(master, index)` pairs map to well-separated keys; the map is
/// fixed forever because dataset files and training runs depend on it.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// ChaCha8 generator for substream `index` of `master`.
pub fn substream(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(master, index))
}
