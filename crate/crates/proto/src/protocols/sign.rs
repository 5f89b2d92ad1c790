//! Sign extraction over the odd ring, and the DReLU built on it.
//!
//! Over `Z_{2^w − 1}` the top bit of a canonical value `v` equals the low
//! bit of `2v`: doubling shifts the msb out the top and the odd modulus
//! wraps it back in at the bottom. Doubling is local on additive shares, so
//! the problem reduces to extracting one *low* bit, which a masked reveal
//! handles: the dealer picks a random point `x`, the evaluators open
//! `r = 2v + x`, and
//!
//! ```text
//! lsb(2v) = lsb(r) ⊕ lsb(x) ⊕ (x > r)
//! ```
//!
//! `lsb(r)` is public to the evaluators, `lsb(x)` arrives as dealer-shared
//! bits, and `(x > r)` is one private compare against the public reveal,
//! masked by a common bit so the dealer's answer tells it nothing. A single
//! bit-product merges the two secret bits, and everything else is local.
//!
//! Wire cost per element: 10 ring lanes (dealer corrections for `x`, its
//! low bit, and the product triple; the reveal both ways; the masked
//! compare bit; the product opening both ways) plus 3 field vectors of `w`
//! bytes. Five waves: deal, reveal, compare, compare-out, open.
//!
//! [`drelu`] preps the operand: at full width it doubles the ring shares —
//! sign-exact for |value| < 2^62, and an even operand can never collapse to
//! the odd-ring modulus — and at reduced width it keeps the configured
//! window of each share, trading exactness for `w`-byte compare vectors.

use mpcnn_core::ring::{bit_decompose, window_value};

use crate::context::SessionCtx;
use crate::protocols::convert::share_convert;
use crate::protocols::mul::{mul_open, RingTriple};
use crate::protocols::pc::{pc_dealer, pc_evaluator, CompareJob};
use crate::protocols::{odd_add, odd_double, odd_sub};
use crate::seeds::{draw_bit, draw_field, draw_odd, draw_ring};
use crate::wire::{Party, Tag};
use crate::ProtoError;

/// Dealer material for one batch of sign extractions, as seen by an
/// evaluator: odd-ring shares of the mask point, field shares of its bit
/// decomposition, ring shares of its low bit, and a product triple.
struct SignDeal {
    x: Vec<u64>,
    x_bits: Vec<Vec<u8>>,
    x_lsb: Vec<u64>,
    triple: RingTriple,
}

fn deal_sign(ctx: &mut SessionCtx, width: u32, n: usize) -> Result<Option<SignDeal>, ProtoError> {
    let f = ctx.field();
    let w = width as usize;
    let out = match ctx.party {
        Party::P0 => {
            // Everything the dealer would send evaluator 0 comes off their
            // shared stream instead; keep the per-element draw order in
            // lockstep with the dealer's.
            let rng = ctx.seeds.with(Party::P2);
            let mut deal = SignDeal {
                x: Vec::with_capacity(n),
                x_bits: Vec::with_capacity(n),
                x_lsb: Vec::with_capacity(n),
                triple: RingTriple::default(),
            };
            for _ in 0..n {
                deal.x.push(draw_odd(rng, width));
                deal.x_bits.push((0..w).map(|_| draw_field(rng, f.p)).collect());
                deal.x_lsb.push(draw_ring(rng));
                deal.triple.a.push(draw_ring(rng));
                deal.triple.b.push(draw_ring(rng));
                deal.triple.c.push(draw_ring(rng));
            }
            Some(deal)
        }
        Party::P1 => {
            let rng = ctx.seeds.with(Party::P2);
            let mut a = Vec::with_capacity(n);
            let mut b = Vec::with_capacity(n);
            for _ in 0..n {
                a.push(draw_ring(rng));
                b.push(draw_ring(rng));
            }
            let x = ctx.recv_ring(Party::P2, Tag::SignDealX)?;
            let raw = ctx.recv(Party::P2, Tag::SignDealBits)?;
            if raw.len() != n * w {
                return Err(ProtoError::Unexpected {
                    expected: format!("{} sign bit bytes", n * w),
                    got: format!("{}", raw.len()),
                    layer: ctx.layer,
                });
            }
            let x_bits = raw.chunks_exact(w).map(|c| c.to_vec()).collect();
            let x_lsb = ctx.recv_ring(Party::P2, Tag::SignDealLsb)?;
            let c = ctx.recv_ring(Party::P2, Tag::SignMulC1)?;
            Some(SignDeal { x, x_bits, x_lsb, triple: RingTriple { a, b, c } })
        }
        Party::P2 => {
            // Draw the point privately; derive evaluator 0's shares from
            // the shared stream and send evaluator 1 the corrections.
            let mut x1 = Vec::with_capacity(n);
            let mut bits1 = Vec::with_capacity(n * w);
            let mut lsb1 = Vec::with_capacity(n);
            let mut c1 = Vec::with_capacity(n);
            let mut a0v = Vec::with_capacity(n);
            let mut b0v = Vec::with_capacity(n);
            let mut c0v = Vec::with_capacity(n);
            for _ in 0..n {
                let x = draw_odd(&mut ctx.dealer_rng, width);
                let rng = ctx.seeds.with(Party::P0);
                let x0 = draw_odd(rng, width);
                x1.push(odd_sub(x, x0, width));
                for bit in bit_decompose(x, width) {
                    let s0 = draw_field(rng, f.p);
                    bits1.push(f.sub(bit, s0));
                }
                let l0 = draw_ring(rng);
                lsb1.push((x & 1).wrapping_sub(l0));
                let (a0, b0, c0) = (draw_ring(rng), draw_ring(rng), draw_ring(rng));
                a0v.push(a0);
                b0v.push(b0);
                c0v.push(c0);
            }
            let rng1 = ctx.seeds.with(Party::P1);
            for i in 0..n {
                let a1 = draw_ring(rng1);
                let b1 = draw_ring(rng1);
                let prod = a0v[i].wrapping_add(a1).wrapping_mul(b0v[i].wrapping_add(b1));
                c1.push(prod.wrapping_sub(c0v[i]));
            }
            ctx.send_ring(Party::P1, Tag::SignDealX, &x1)?;
            ctx.send(Party::P1, Tag::SignDealBits, &bits1)?;
            ctx.send_ring(Party::P1, Tag::SignDealLsb, &lsb1)?;
            ctx.send_ring(Party::P1, Tag::SignMulC1, &c1)?;
            None
        }
    };
    ctx.round();
    Ok(out)
}

/// From odd-ring shares of `v` (canonical, `v < 2^width − 1`) to `Z_{2^64}`
/// shares of `msb(v)`. Dealer passes an empty slice, gets an empty vector.
pub fn msb_from_odd(
    ctx: &mut SessionCtx,
    width: u32,
    n: usize,
    v: &[u64],
) -> Result<Vec<u64>, ProtoError> {
    let deal = deal_sign(ctx, width, n)?;
    match ctx.party {
        Party::P0 | Party::P1 => {
            let j = ctx.j();
            let deal = deal.expect("evaluators hold dealer material");
            assert_eq!(v.len(), n);

            // Reveal r = 2v + x to both evaluators.
            let r_own: Vec<u64> = (0..n)
                .map(|e| odd_add(odd_double(v[e], width), deal.x[e], width))
                .collect();
            let peer = ctx.party.other_evaluator();
            ctx.send_ring(peer, Tag::SignReveal, &r_own)?;
            let r_peer = ctx.recv_ring(peer, Tag::SignReveal)?;
            let r: Vec<u64> =
                (0..n).map(|e| odd_add(r_own[e], r_peer[e], width)).collect();
            ctx.round();

            // Compare x against the public reveal, masked by a common bit:
            // the dealer reports (x > r) ⊕ β. The canonical reveal never
            // reaches the modulus, so `r + 1` stays in range.
            let beta: Vec<u64> = {
                let rng = ctx.seeds.evaluators();
                (0..n).map(|_| draw_bit(rng)).collect()
            };
            let jobs: Vec<CompareJob> = (0..n)
                .map(|e| {
                    if beta[e] == 0 {
                        CompareJob::Greater { y: r[e] }
                    } else {
                        CompareJob::Less { y: r[e] + 1 }
                    }
                })
                .collect();
            pc_evaluator(ctx, Tag::SignCompare, width, &jobs, &deal.x_bits)?;
            ctx.round();

            // Dealer's masked answer comes back as ring shares.
            let masked = if j == 0 {
                let rng = ctx.seeds.with(Party::P2);
                (0..n).map(|_| draw_ring(rng)).collect::<Vec<u64>>()
            } else {
                ctx.recv_ring(Party::P2, Tag::SignCompareOut)?
            };
            ctx.round();
            let gamma: Vec<u64> = (0..n)
                .map(|e| {
                    if beta[e] == 0 {
                        masked[e]
                    } else {
                        (1 - j).wrapping_sub(masked[e])
                    }
                })
                .collect();

            // One bit-product merges lsb(x) and (x > r); the public lsb(r)
            // folds in locally.
            let m = mul_open(ctx, Tag::SignMulOpen, &deal.x_lsb, &gamma, &deal.triple)?;
            let out = (0..n)
                .map(|e| {
                    let xor2 = deal.x_lsb[e]
                        .wrapping_add(gamma[e])
                        .wrapping_sub(m[e].wrapping_mul(2));
                    if r[e] & 1 == 0 {
                        xor2
                    } else {
                        (1 - j).wrapping_sub(xor2)
                    }
                })
                .collect();
            Ok(out)
        }
        Party::P2 => {
            ctx.round(); // reveal happens between the evaluators

            let compare = pc_dealer(ctx, Tag::SignCompare, width, n)?;
            ctx.round();

            let mut out1 = Vec::with_capacity(n);
            for &bit in &compare {
                let rng = ctx.seeds.with(Party::P0);
                let s0 = draw_ring(rng);
                out1.push(bit.wrapping_sub(s0));
            }
            ctx.send_ring(Party::P1, Tag::SignCompareOut, &out1)?;
            ctx.round();

            mul_open(ctx, Tag::SignMulOpen, &[], &[], &RingTriple::default())?;
            Ok(Vec::new())
        }
    }
}

/// `Z_{2^64}` shares of `1` if the shared value is non-negative, else `0`.
///
/// At full compare width the operand is doubled (local on shares), which
/// keeps the sign for |value| < 2^62 and sidesteps the odd-ring collapse
/// exactly. At reduced width each share keeps only the configured window;
/// the result then matches the sign of the windowed share sum, which is
/// wrong with small probability for values near zero or near the window
/// top — the approximation the compare-width profile buys bandwidth with.
pub fn drelu(ctx: &mut SessionCtx, n: usize, a: &[u64]) -> Result<Vec<u64>, ProtoError> {
    let width = ctx.compare_width();
    ctx.drelu_count += n as u64;
    let u: Vec<u64> = if ctx.is_dealer() {
        Vec::new()
    } else if width == 64 {
        a.iter().map(|&x| x.wrapping_mul(2)).collect()
    } else {
        let cfg = ctx.profile.compare;
        a.iter().map(|&x| window_value(x, cfg.ignore_msb, cfg.ignore_lsb)).collect()
    };
    let odd = share_convert(ctx, width, n, &u)?;
    let msb = msb_from_odd(ctx, width, n, &odd)?;
    if ctx.is_dealer() {
        return Ok(Vec::new());
    }
    let j = ctx.j();
    Ok(msb.iter().map(|&m| (1 - j).wrapping_sub(m)).collect())
}
