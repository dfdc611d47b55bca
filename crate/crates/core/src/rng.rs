//! Seeded random streams.
//!
//! Every stochastic component draws from [`Xoshiro256PlusPlus`] seeded through
//! `seed_from_u64` (SplitMix64 expansion of the 64-bit seed). Uniform reals use
//! the top 53 bits of a draw scaled by 2^-53, and normal deviates use the
//! Box-Muller cosine branch on two consecutive uniforms. Both transforms are
//! simple enough to port bit-for-bit to other languages.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

pub fn stream(seed: u64) -> StreamRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Derives an independent seed for a numbered sub-stream (tree, fold, iteration, ...).
pub fn derive_seed(seed: u64, stream_id: u64) -> u64 {
    // SplitMix64 finalizer over the combined key.
    let mut z = seed ^ stream_id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1).
pub fn uniform(rng: &mut StreamRng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform_range(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Standard normal deviate (Box-Muller, cosine branch only).
pub fn standard_normal(rng: &mut StreamRng) -> f64 {
    // 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Fisher-Yates shuffle driven by [`uniform`], so the permutation is portable.
pub fn shuffle<T>(rng: &mut StreamRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index_below(rng, i + 1);
        items.swap(i, j);
    }
}

/// Uniform index in `0..bound`.
pub fn index_below(rng: &mut StreamRng, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((uniform(rng) * bound as f64) as usize).min(bound - 1)
}
