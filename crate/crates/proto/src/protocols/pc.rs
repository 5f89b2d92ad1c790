//! Private compare.
//!
//! The evaluators hold prime-field shares of the bit decomposition of some
//! `w`-bit value `x`; both know a public operand and agree (via common
//! randomness) on what the dealer's output bit should mean. Each evaluator
//! derives one field vector per element and sends it to the dealer, who
//! reconstructs and reports whether any position is zero. Blinding by common
//! nonzero scalars and a common permutation hides everything except that
//! zero/no-zero bit, and the comparison itself is masked by the caller's
//! common random bit, so the dealer learns nothing about `x`.
//!
//! Three vector recipes cover every call site:
//!
//! * [`CompareJob::Greater`]` { y }` — zero appears iff `x > y`,
//! * [`CompareJob::Less`]` { y }` — zero appears iff `x < y` (needs `y ≥ 1`),
//! * [`CompareJob::Forced`]` { bit }` — operand degenerated (the masked
//!   value wrapped to the modulus edge), so the outcome is already known to
//!   the evaluators; they emit crafted vectors that look like any other
//!   element but decode to the agreed bit.
//!
//! Cost per element: one field vector of `w` bytes from each evaluator.

use rand_chacha::ChaCha20Rng;

use mpcnn_core::ring::{bit_decompose, FieldP};

use crate::context::SessionCtx;
use crate::seeds::{draw_field, draw_nonzero_field, draw_perm};
use crate::wire::{Party, Tag};
use crate::ProtoError;

/// What one element's compare vector should encode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompareJob {
    /// Dealer finds a zero iff the shared value exceeds `y`.
    Greater { y: u64 },
    /// Dealer finds a zero iff the shared value is below `y`. `y ≥ 1`.
    Less { y: u64 },
    /// Dealer's bit is forced to `bit` regardless of the shared value.
    Forced { bit: u64 },
}

/// Field share of `x_bit ⊕ y_bit` with `y_bit` public.
fn xor_share(f: FieldP, j: u64, y_bit: u8, x_share: u8) -> u8 {
    // x ⊕ y = x + y - 2xy; the public y term lands on evaluator 0.
    let base = if j == 0 { y_bit } else { 0 };
    f.sub(f.add(base, x_share), f.mul(2 * y_bit, x_share))
}

/// Evaluator half: derive and send one blinded vector per element.
///
/// `x_bits[e]` is this evaluator's field-share of element `e`'s `w`-bit
/// decomposition, most significant bit first. Both evaluators must pass
/// identical `jobs` (they are derived from common randomness and public
/// values) or the vectors won't reconstruct meaningfully.
pub fn pc_evaluator(
    ctx: &mut SessionCtx,
    tag: Tag,
    width: u32,
    jobs: &[CompareJob],
    x_bits: &[Vec<u8>],
) -> Result<(), ProtoError> {
    assert_eq!(jobs.len(), x_bits.len());
    let f = ctx.field();
    let j = ctx.j();
    let w = width as usize;
    let mut payload = Vec::with_capacity(jobs.len() * w);
    for (job, shares) in jobs.iter().zip(x_bits) {
        assert_eq!(shares.len(), w);
        let rng = ctx.seeds.evaluators();
        let vec = element_vector(rng, f, j, width, *job, shares);
        payload.extend_from_slice(&vec);
    }
    ctx.send(Party::P2, tag, &payload)
}

fn element_vector(
    rng: &mut ChaCha20Rng,
    f: FieldP,
    j: u64,
    width: u32,
    job: CompareJob,
    shares: &[u8],
) -> Vec<u8> {
    let w = width as usize;
    // Common blinding for every element, drawn identically by both
    // evaluators: a position permutation and nonzero scale factors.
    let perm = draw_perm(rng, w);
    let scales: Vec<u8> = (0..w).map(|_| draw_nonzero_field(rng, f.p)).collect();

    let plain = match job {
        CompareJob::Greater { y } | CompareJob::Less { y } => {
            let yb = bit_decompose(y, width);
            let mut prefix = 0u8; // Σ shares of (x_k ⊕ y_k) over more significant k
            let mut c = Vec::with_capacity(w);
            for i in 0..w {
                let ci = match job {
                    // c_i = y_i − x_i + 1 + prefix
                    CompareJob::Greater { .. } => {
                        let base = if j == 0 { f.add(yb[i], 1) } else { 0 };
                        f.add(f.sub(base, shares[i]), prefix)
                    }
                    // c_i = x_i − y_i + 1 + prefix
                    CompareJob::Less { .. } => {
                        let base = if j == 0 { f.sub(1, yb[i]) } else { 0 };
                        f.add(f.add(base, shares[i]), prefix)
                    }
                    CompareJob::Forced { .. } => unreachable!(),
                };
                c.push(ci);
                prefix = f.add(prefix, xor_share(f, j, yb[i], shares[i]));
            }
            c
        }
        CompareJob::Forced { bit } => {
            // Both evaluators know the intended outcome; they assemble a
            // vector with (or without) one zero from common randomness and
            // split it additively. The dealer sees the same distribution as
            // any honest element: random nonzero values, maybe one zero.
            let target: Vec<u8> = (0..w)
                .map(|i| if bit == 1 && i == 0 { 0 } else { draw_nonzero_field(rng, f.p) })
                .collect();
            let own: Vec<u8> = (0..w).map(|_| draw_field(rng, f.p)).collect();
            (0..w)
                .map(|i| if j == 0 { own[i] } else { f.sub(target[i], own[i]) })
                .collect()
        }
    };

    let mut out = vec![0u8; w];
    for i in 0..w {
        out[perm[i]] = f.mul(scales[i], plain[i]);
    }
    out
}

/// Dealer half: reconstruct each element's vector and report whether it
/// contains a zero. One output bit per element.
pub fn pc_dealer(
    ctx: &mut SessionCtx,
    tag: Tag,
    width: u32,
    n: usize,
) -> Result<Vec<u64>, ProtoError> {
    let f = ctx.field();
    let w = width as usize;
    let v0 = ctx.recv(Party::P0, tag)?;
    let v1 = ctx.recv(Party::P1, tag)?;
    if v0.len() != n * w || v1.len() != n * w {
        return Err(ProtoError::Unexpected {
            expected: format!("{} compare bytes", n * w),
            got: format!("{}/{}", v0.len(), v1.len()),
            layer: ctx.layer,
        });
    }
    let mut bits = Vec::with_capacity(n);
    for e in 0..n {
        let found = (0..w).any(|i| f.add(v0[e * w + i], v1[e * w + i]) == 0);
        bits.push(found as u64);
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    // The share-level vector recipes, checked without any transport: split
    // bits into field shares, build both evaluators' vectors, reconstruct.
    fn reconstruct(width: u32, x: u64, job: CompareJob, seed: u64) -> bool {
        let f = FieldP::new(67);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bits = bit_decompose(x, width);
        let mut share0 = Vec::new();
        let mut share1 = Vec::new();
        for &b in &bits {
            let s0 = draw_field(&mut rng, f.p);
            share0.push(s0);
            share1.push(f.sub(b, s0));
        }
        // Both sides must consume identical common randomness.
        let mut rng_a = ChaCha20Rng::seed_from_u64(seed ^ 0x55aa);
        let mut rng_b = ChaCha20Rng::seed_from_u64(seed ^ 0x55aa);
        let v0 = element_vector(&mut rng_a, f, 0, width, job, &share0);
        let v1 = element_vector(&mut rng_b, f, 1, width, job, &share1);
        (0..width as usize).any(|i| f.add(v0[i], v1[i]) == 0)
    }

    #[test]
    fn greater_recipe_exhaustive_width_4() {
        for x in 0..16u64 {
            for y in 0..16u64 {
                let found = reconstruct(4, x, CompareJob::Greater { y }, 31 * x + y);
                assert_eq!(found, x > y, "x={x} y={y}");
            }
        }
    }

    #[test]
    fn less_recipe_exhaustive_width_4() {
        for x in 0..16u64 {
            for y in 1..16u64 {
                let found = reconstruct(4, x, CompareJob::Less { y }, 77 * x + y);
                assert_eq!(found, x < y, "x={x} y={y}");
            }
        }
    }

    #[test]
    fn forced_recipe_pins_outcome() {
        for x in [0u64, 9, 15] {
            assert!(reconstruct(4, x, CompareJob::Forced { bit: 1 }, x));
            assert!(!reconstruct(4, x, CompareJob::Forced { bit: 0 }, x + 100));
        }
    }

    #[test]
    fn prefix_sums_stay_under_the_prime_at_full_width() {
        // Worst case: every position differs, so the last prefix sum is
        // width-1 and the cell value can reach width+1. p = 67 > 64 + 2.
        let x = u64::MAX;
        let found = reconstruct(64, x, CompareJob::Greater { y: 0 }, 5);
        assert!(found);
        let found = reconstruct(64, 0, CompareJob::Less { y: u64::MAX }, 6);
        assert!(found);
    }
}
