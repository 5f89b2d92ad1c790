//! Shared helpers for protocol integration tests.
//!
//! Every test binary compiles this module on its own, and not every binary
//! uses every helper.
#![allow(dead_code)]

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Deterministic additive split of public test values: both evaluators call
/// this with the same seed and their own index, so the shares line up
/// without any coordination. The dealer gets an empty vector.
pub fn split_shares(values: &[u64], seed: u64, j: Option<u64>) -> Vec<u64> {
    let Some(j) = j else { return Vec::new() };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    values
        .iter()
        .map(|v| {
            let s0 = rng.next_u64();
            if j == 0 {
                s0
            } else {
                v.wrapping_sub(s0)
            }
        })
        .collect()
}

/// Random test values mixing small magnitudes (signed) with full-range noise.
pub fn mixed_values(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| match i % 4 {
            0 => rng.gen_range(0..1u64 << 20),
            1 => (rng.gen_range(0..1u64 << 20) as i64).wrapping_neg() as u64,
            2 => rng.gen_range(0..1u64 << 40),
            _ => (rng.gen_range(0..1u64 << 40) as i64).wrapping_neg() as u64,
        })
        .collect()
}
