//! Share conversion: `Z_{2^w}` → `Z_{2^w - 1}`.
//!
//! The evaluators hold additive shares of a `w`-bit value `a` and come out
//! holding additive shares of the same value over the odd modulus
//! `2^w - 1`. The value `a = 2^w - 1` itself is ambiguous over the odd ring
//! (it collapses to zero); callers arrange operands so it cannot occur (the
//! exact sign pipeline doubles first, which makes the operand even).
//!
//! Wire cost per element: 4 ring lanes (two masked uploads, the dealer's
//! wrap share, the dealer's masked-compare share — dealer share pairs are
//! PRF-trimmed so only the correction half travels) and 3 field vectors of
//! `w` bytes (the dealer's bit decomposition plus both compare vectors).
//! Four waves: mask-and-upload, deal-back, compare, compare-out.

use mpcnn_core::ring::bit_decompose;

use crate::context::SessionCtx;
use crate::protocols::pc::{pc_dealer, pc_evaluator, CompareJob};
use crate::protocols::{add_w, odd_add, odd_new, odd_sub, sub_w, wrap_w};
use crate::seeds::{draw_bit, draw_bits, draw_field, draw_odd};
use crate::wire::{Party, Tag};
use crate::ProtoError;

/// Per-element common randomness the evaluators share.
struct MaskDraw {
    r: u64,
    r_own: u64,
    eta: u64,
    alpha: u64,
}

fn draw_masks(ctx: &mut SessionCtx, width: u32, n: usize) -> Vec<MaskDraw> {
    let j = ctx.j();
    let rng = ctx.seeds.evaluators();
    (0..n)
        .map(|_| {
            let r = draw_bits(rng, width);
            let r0 = draw_bits(rng, width);
            let r1 = sub_w(r, r0, width);
            let eta = draw_bit(rng);
            MaskDraw {
                r,
                r_own: if j == 0 { r0 } else { r1 },
                eta,
                alpha: wrap_w(r0, r1, width),
            }
        })
        .collect()
}

/// Converts shares of `w`-bit values into shares over `Z_{2^w - 1}`.
///
/// Evaluators pass their share vector and receive their odd-ring shares;
/// the dealer passes an empty slice and receives an empty vector.
pub fn share_convert(
    ctx: &mut SessionCtx,
    width: u32,
    n: usize,
    a: &[u64],
) -> Result<Vec<u64>, ProtoError> {
    let f = ctx.field();
    match ctx.party {
        Party::P0 | Party::P1 => {
            assert_eq!(a.len(), n);
            let j = ctx.j();
            let masks = draw_masks(ctx, width, n);

            // Wave 1: upload masked values.
            let mut masked = Vec::with_capacity(n);
            let mut beta = Vec::with_capacity(n);
            for (ai, m) in a.iter().zip(&masks) {
                masked.push(add_w(*ai, m.r_own, width));
                beta.push(wrap_w(*ai, m.r_own, width));
            }
            ctx.send_ring(Party::P2, Tag::ScMasked, &masked)?;
            ctx.round();

            // Wave 2: dealer's decomposition of the masked value and its
            // wrap bit. Evaluator 0's halves come off the shared stream.
            let (bit_shares, wrap_shares) = if j == 0 {
                let rng = ctx.seeds.with(Party::P2);
                let mut bits = Vec::with_capacity(n);
                let mut wraps = Vec::with_capacity(n);
                for _ in 0..n {
                    bits.push((0..width).map(|_| draw_field(rng, f.p)).collect::<Vec<u8>>());
                    wraps.push(draw_odd(rng, width));
                }
                (bits, wraps)
            } else {
                let raw = ctx.recv(Party::P2, Tag::ScDealBits)?;
                let bits = raw.chunks_exact(width as usize).map(|c| c.to_vec()).collect();
                let wraps = ctx.recv_ring(Party::P2, Tag::ScDealWrap)?;
                (bits, wraps)
            };
            ctx.round();

            // Wave 3: compare the dealer's value against r - 1, masked by
            // the common bit. r = 0 wraps the operand, but then the outcome
            // is already determined (the masked value can never exceed the
            // all-ones operand), so the vectors are crafted.
            let jobs: Vec<CompareJob> = masks
                .iter()
                .map(|m| {
                    if m.r == 0 {
                        CompareJob::Forced { bit: 1 - m.eta }
                    } else if m.eta == 0 {
                        CompareJob::Greater { y: m.r - 1 }
                    } else {
                        CompareJob::Less { y: m.r }
                    }
                })
                .collect();
            pc_evaluator(ctx, Tag::ScCompare, width, &jobs, &bit_shares)?;
            ctx.round();

            // Wave 4: dealer shares the masked compare bit over the odd ring.
            let eta_shares = if j == 0 {
                let rng = ctx.seeds.with(Party::P2);
                (0..n).map(|_| draw_odd(rng, width)).collect::<Vec<u64>>()
            } else {
                ctx.recv_ring(Party::P2, Tag::ScCompareOut)?
            };
            ctx.round();

            // Local combine. With t the unmasked compare bit, the wrap of
            // the original shares is β₀+β₁+δ−α−1+t, and subtracting it from
            // the reinterpreted shares yields odd-ring shares of a.
            let mut out = Vec::with_capacity(n);
            for e in 0..n {
                let m = &masks[e];
                let t = if m.eta == 0 {
                    eta_shares[e]
                } else {
                    odd_sub(1 - j, eta_shares[e], width)
                };
                let mut y = odd_new(a[e], width);
                if j == 0 {
                    y = odd_add(y, m.alpha + 1, width);
                }
                y = odd_sub(y, beta[e], width);
                y = odd_sub(y, wrap_shares[e], width);
                y = odd_sub(y, t, width);
                out.push(y);
            }
            Ok(out)
        }
        Party::P2 => {
            // Wave 1: receive masked values.
            let m0 = ctx.recv_ring(Party::P0, Tag::ScMasked)?;
            let m1 = ctx.recv_ring(Party::P1, Tag::ScMasked)?;
            ctx.round();

            // Wave 2: decompose and share; P0's halves are PRF-derived, so
            // only P1's corrections travel.
            let mut bits1 = Vec::with_capacity(n * width as usize);
            let mut wraps1 = Vec::with_capacity(n);
            for e in 0..n {
                let masked = add_w(m0[e], m1[e], width);
                let delta = wrap_w(m0[e], m1[e], width);
                let rng = ctx.seeds.with(Party::P0);
                for b in bit_decompose(masked, width) {
                    let s0 = draw_field(rng, f.p);
                    bits1.push(f.sub(b, s0));
                }
                let d0 = draw_odd(rng, width);
                wraps1.push(odd_sub(delta, d0, width));
            }
            ctx.send(Party::P1, Tag::ScDealBits, &bits1)?;
            ctx.send_ring(Party::P1, Tag::ScDealWrap, &wraps1)?;
            ctx.round();

            // Wave 3: collect compare vectors.
            let compare_bits = pc_dealer(ctx, Tag::ScCompare, width, n)?;
            ctx.round();

            // Wave 4: share the masked compare bit.
            let mut eta1 = Vec::with_capacity(n);
            for &bit in &compare_bits {
                let rng = ctx.seeds.with(Party::P0);
                let e0 = draw_odd(rng, width);
                eta1.push(odd_sub(bit, e0, width));
            }
            ctx.send_ring(Party::P1, Tag::ScCompareOut, &eta1)?;
            ctx.round();
            Ok(Vec::new())
        }
    }
}
