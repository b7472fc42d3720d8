//! Counter-based seed derivation.
//!
//! Every random decision is addressed by a key (master seed plus a tuple of
//! counters), so results do not depend on evaluation order or on how many
//! draws happened elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold `word` into `state`.
pub fn combine(state: u64, word: u64) -> u64 {
    mix64(state ^ mix64(word.wrapping_add(GOLDEN)))
}

/// FNV-1a over bytes, used to key streams by tensor name.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Child seed for a numbered sub-stream.
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    combine(combine(seed, 0x5EED), stream)
}

/// A ChaCha generator for a numbered sub-stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, stream))
}

/// Uniform in [0, 1) addressed by `(seed, a, b, c)`.
pub fn uniform_at(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let h = combine(combine(combine(mix64(seed), a), b), c);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
