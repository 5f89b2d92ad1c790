//! Mask-and-open multiplication.
//!
//! The dealer knows both factors' masks (they come off its pairwise PRF
//! streams), computes the mask product, and ships only evaluator 1's
//! correction share — the rest of the correlated triple travels for zero
//! bytes. The evaluators open masked operands to each other and combine
//! locally. Four shapes share that skeleton:
//!
//! * [`deal_triples`]/[`mul_open`] — elementwise vectors,
//! * [`deal_gate_triples`]/[`gate_open`] — one scalar gate bit per patch
//!   times that patch's value vector (the block-activation multiply),
//! * [`deal_conv_triples`]/[`conv_open`] — full convolution,
//! * [`deal_linear_triples`]/[`linear_open`] — matrix–vector.
//!
//! Wire cost: the correction share is one lane per output element; each
//! opening is one lane per operand element in both directions.

use ndarray::{ArrayD, IxDyn};

use mpcnn_core::tensor::{conv_axis, Padding, RTensor};

use crate::context::SessionCtx;
use crate::seeds::draw_ring_vec;
use crate::wire::{Party, Tag};
use crate::ProtoError;

/// Whether a dealing wave books a round of its own. Standalone products
/// (convolution, linear) count their correction delivery as a wave; inside
/// the activation pipeline the delivery hides behind an existing dealer
/// wave, so it adds no round.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum DealRound {
    Counted,
    Absorbed,
}

/// One evaluator's share of a correlated triple (empty on the dealer).
#[derive(Clone, Debug, Default)]
pub struct RingTriple {
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub c: Vec<u64>,
}

fn add_vec(x: &[u64], y: &[u64]) -> Vec<u64> {
    x.iter().zip(y).map(|(a, b)| a.wrapping_add(*b)).collect()
}

fn sub_vec(x: &[u64], y: &[u64]) -> Vec<u64> {
    x.iter().zip(y).map(|(a, b)| a.wrapping_sub(*b)).collect()
}

/// Deals `n` elementwise triples over `Z_{2^64}`.
pub fn deal_triples(
    ctx: &mut SessionCtx,
    tag: Tag,
    n: usize,
    round: DealRound,
) -> Result<RingTriple, ProtoError> {
    let out = match ctx.party {
        Party::P0 => {
            let rng = ctx.seeds.with(Party::P2);
            let a = draw_ring_vec(rng, n);
            let b = draw_ring_vec(rng, n);
            let c = draw_ring_vec(rng, n);
            RingTriple { a, b, c }
        }
        Party::P1 => {
            let rng = ctx.seeds.with(Party::P2);
            let a = draw_ring_vec(rng, n);
            let b = draw_ring_vec(rng, n);
            let c = ctx.recv_ring(Party::P2, tag)?;
            RingTriple { a, b, c }
        }
        Party::P2 => {
            let rng0 = ctx.seeds.with(Party::P0);
            let a0 = draw_ring_vec(rng0, n);
            let b0 = draw_ring_vec(rng0, n);
            let c0 = draw_ring_vec(rng0, n);
            let rng1 = ctx.seeds.with(Party::P1);
            let a1 = draw_ring_vec(rng1, n);
            let b1 = draw_ring_vec(rng1, n);
            let c1: Vec<u64> = (0..n)
                .map(|i| {
                    let prod = a0[i].wrapping_add(a1[i]).wrapping_mul(b0[i].wrapping_add(b1[i]));
                    prod.wrapping_sub(c0[i])
                })
                .collect();
            ctx.send_ring(Party::P1, tag, &c1)?;
            RingTriple::default()
        }
    };
    if round == DealRound::Counted {
        ctx.round();
    }
    Ok(out)
}

/// Opens masked operands and combines: evaluators return shares of `x ⊙ y`.
pub fn mul_open(
    ctx: &mut SessionCtx,
    tag: Tag,
    x: &[u64],
    y: &[u64],
    t: &RingTriple,
) -> Result<Vec<u64>, ProtoError> {
    let out = match ctx.party {
        Party::P0 | Party::P1 => {
            let j = ctx.j();
            let n = x.len();
            let e_own = sub_vec(x, &t.a);
            let f_own = sub_vec(y, &t.b);
            let mut payload = e_own.clone();
            payload.extend_from_slice(&f_own);
            let peer = ctx.party.other_evaluator();
            ctx.send_ring(peer, tag, &payload)?;
            let theirs = ctx.recv_ring(peer, tag)?;
            let (e_peer, f_peer) = theirs.split_at(n);
            let e = add_vec(&e_own, e_peer);
            let f = add_vec(&f_own, f_peer);
            (0..n)
                .map(|i| {
                    let mut z = e[i].wrapping_mul(t.b[i]).wrapping_add(f[i].wrapping_mul(t.a[i]));
                    z = z.wrapping_add(t.c[i]);
                    if j == 0 {
                        z = z.wrapping_add(e[i].wrapping_mul(f[i]));
                    }
                    z
                })
                .collect()
        }
        Party::P2 => Vec::new(),
    };
    ctx.round();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Gate multiply: one scalar bit per patch × that patch's values
// ---------------------------------------------------------------------------

/// Triple for the gate multiply: the bit mask is per patch, the value mask
/// and the product correction are per element.
#[derive(Clone, Debug, Default)]
pub struct GateTriple {
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub c: Vec<u64>,
}

/// Deals gate triples for patches of the given sizes.
pub fn deal_gate_triples(
    ctx: &mut SessionCtx,
    tag: Tag,
    sizes: &[usize],
    round: DealRound,
) -> Result<GateTriple, ProtoError> {
    let patches = sizes.len();
    let elems: usize = sizes.iter().sum();
    let out = match ctx.party {
        Party::P0 => {
            let rng = ctx.seeds.with(Party::P2);
            let a = draw_ring_vec(rng, patches);
            let b = draw_ring_vec(rng, elems);
            let c = draw_ring_vec(rng, elems);
            GateTriple { a, b, c }
        }
        Party::P1 => {
            let rng = ctx.seeds.with(Party::P2);
            let a = draw_ring_vec(rng, patches);
            let b = draw_ring_vec(rng, elems);
            let c = ctx.recv_ring(Party::P2, tag)?;
            GateTriple { a, b, c }
        }
        Party::P2 => {
            let rng0 = ctx.seeds.with(Party::P0);
            let a0 = draw_ring_vec(rng0, patches);
            let b0 = draw_ring_vec(rng0, elems);
            let c0 = draw_ring_vec(rng0, elems);
            let rng1 = ctx.seeds.with(Party::P1);
            let a1 = draw_ring_vec(rng1, patches);
            let b1 = draw_ring_vec(rng1, elems);
            let mut c1 = Vec::with_capacity(elems);
            let mut k = 0usize;
            for (p, &len) in sizes.iter().enumerate() {
                let a = a0[p].wrapping_add(a1[p]);
                for _ in 0..len {
                    let prod = a.wrapping_mul(b0[k].wrapping_add(b1[k]));
                    c1.push(prod.wrapping_sub(c0[k]));
                    k += 1;
                }
            }
            ctx.send_ring(Party::P1, tag, &c1)?;
            GateTriple::default()
        }
    };
    if round == DealRound::Counted {
        ctx.round();
    }
    Ok(out)
}

/// Opens gate bits and patch values; evaluators return shares of every
/// element multiplied by its patch's bit.
pub fn gate_open(
    ctx: &mut SessionCtx,
    tag: Tag,
    bits: &[u64],
    values: &[u64],
    sizes: &[usize],
    t: &GateTriple,
) -> Result<Vec<u64>, ProtoError> {
    let out = match ctx.party {
        Party::P0 | Party::P1 => {
            let j = ctx.j();
            let patches = sizes.len();
            let e_own = sub_vec(bits, &t.a);
            let f_own = sub_vec(values, &t.b);
            let mut payload = e_own.clone();
            payload.extend_from_slice(&f_own);
            let peer = ctx.party.other_evaluator();
            ctx.send_ring(peer, tag, &payload)?;
            let theirs = ctx.recv_ring(peer, tag)?;
            let (e_peer, f_peer) = theirs.split_at(patches);
            let e = add_vec(&e_own, e_peer);
            let f = add_vec(&f_own, f_peer);
            let mut out = Vec::with_capacity(values.len());
            let mut k = 0usize;
            for (p, &len) in sizes.iter().enumerate() {
                for _ in 0..len {
                    let mut z = e[p].wrapping_mul(t.b[k]).wrapping_add(f[k].wrapping_mul(t.a[p]));
                    z = z.wrapping_add(t.c[k]);
                    if j == 0 {
                        z = z.wrapping_add(e[p].wrapping_mul(f[k]));
                    }
                    out.push(z);
                    k += 1;
                }
            }
            out
        }
        Party::P2 => Vec::new(),
    };
    ctx.round();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Convolution and matrix–vector
// ---------------------------------------------------------------------------

/// Plain wrapping convolution over ring tensors (no truncation, no bias):
/// the combine primitive for masked convolutions.
pub fn conv_raw(x: &RTensor, w: &RTensor, stride: u32, padding: Padding) -> RTensor {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (o, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    debug_assert_eq!(w.shape()[1], c);
    let (oh, pt) = conv_axis(h as u32, kh as u32, stride, padding);
    let (ow, pl) = conv_axis(wd as u32, kw as u32, stride, padding);
    let s = stride as usize;
    let mut out = ArrayD::zeros(IxDyn(&[o, oh, ow]));
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0u64;
                for ic in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * s + ky) as i64 - pt;
                        if iy < 0 || iy >= h as i64 {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * s + kx) as i64 - pl;
                            if ix < 0 || ix >= wd as i64 {
                                continue;
                            }
                            acc = acc.wrapping_add(
                                x[[ic, iy as usize, ix as usize]]
                                    .wrapping_mul(w[[oc, ic, ky, kx]]),
                            );
                        }
                    }
                }
                out[[oc, oy, ox]] = acc;
            }
        }
    }
    out
}

/// Plain wrapping matrix–vector product: `w` is `[o, n]`, `x` is `[n]`.
pub fn matvec_raw(w: &RTensor, x: &RTensor) -> RTensor {
    let (o, n) = (w.shape()[0], w.shape()[1]);
    let mut out = ArrayD::zeros(IxDyn(&[o]));
    for oi in 0..o {
        let mut acc = 0u64;
        for i in 0..n {
            acc = acc.wrapping_add(w[[oi, i]].wrapping_mul(x[i]));
        }
        out[oi] = acc;
    }
    out
}

fn draw_tensor(rng: &mut rand_chacha::ChaCha20Rng, shape: &[usize]) -> RTensor {
    let n: usize = shape.iter().product();
    ArrayD::from_shape_vec(IxDyn(shape), draw_ring_vec(rng, n)).expect("shape matches length")
}

fn add_t(x: &RTensor, y: &RTensor) -> RTensor {
    let mut out = x.clone();
    out.zip_mut_with(y, |a, b| *a = a.wrapping_add(*b));
    out
}

fn sub_t(x: &RTensor, y: &RTensor) -> RTensor {
    let mut out = x.clone();
    out.zip_mut_with(y, |a, b| *a = a.wrapping_sub(*b));
    out
}

/// Evaluator's masks for one tensor product (empty tensors on the dealer).
#[derive(Clone, Debug)]
pub struct TensorTriple {
    pub a: RTensor,
    pub b: RTensor,
    pub c: RTensor,
}

fn empty_triple() -> TensorTriple {
    let z = ArrayD::zeros(IxDyn(&[0]));
    TensorTriple { a: z.clone(), b: z.clone(), c: z }
}

/// Deals one convolution triple: input-shaped mask, kernel-shaped mask, and
/// the convolution of the full masks as correction.
pub fn deal_conv_triples(
    ctx: &mut SessionCtx,
    tag: Tag,
    in_shape: &[usize],
    w_shape: &[usize],
    stride: u32,
    padding: Padding,
) -> Result<TensorTriple, ProtoError> {
    let out = match ctx.party {
        Party::P0 | Party::P1 => {
            let peer = Party::P2;
            let me = ctx.party;
            let rng = ctx.seeds.with(peer);
            let a = draw_tensor(rng, in_shape);
            let b = draw_tensor(rng, w_shape);
            let c = if me == Party::P0 {
                let out_len = conv_out_len(in_shape, w_shape, stride, padding);
                draw_tensor(ctx.seeds.with(peer), &out_len)
            } else {
                let flat = ctx.recv_ring(Party::P2, tag)?;
                let shape = conv_out_len(in_shape, w_shape, stride, padding);
                ArrayD::from_shape_vec(IxDyn(&shape), flat).map_err(|_| {
                    ProtoError::Unexpected {
                        expected: "conv correction of output shape".into(),
                        got: "wrong length".into(),
                        layer: ctx.layer,
                    }
                })?
            };
            TensorTriple { a, b, c }
        }
        Party::P2 => {
            let rng0 = ctx.seeds.with(Party::P0);
            let a0 = draw_tensor(rng0, in_shape);
            let b0 = draw_tensor(rng0, w_shape);
            let rng1 = ctx.seeds.with(Party::P1);
            let a1 = draw_tensor(rng1, in_shape);
            let b1 = draw_tensor(rng1, w_shape);
            let c = conv_raw(&add_t(&a0, &a1), &add_t(&b0, &b1), stride, padding);
            let c0 = draw_tensor(ctx.seeds.with(Party::P0), c.shape());
            let c1 = sub_t(&c, &c0);
            let flat: Vec<u64> = c1.iter().copied().collect();
            ctx.send_ring(Party::P1, tag, &flat)?;
            empty_triple()
        }
    };
    ctx.round();
    Ok(out)
}

fn conv_out_len(in_shape: &[usize], w_shape: &[usize], stride: u32, padding: Padding) -> Vec<usize> {
    let (oh, _) = conv_axis(in_shape[1] as u32, w_shape[2] as u32, stride, padding);
    let (ow, _) = conv_axis(in_shape[2] as u32, w_shape[3] as u32, stride, padding);
    vec![w_shape[0], oh, ow]
}

/// Opens masked input and kernel, returning shares of the convolution
/// (products at doubled scale; the caller truncates).
#[allow(clippy::too_many_arguments)]
pub fn conv_open(
    ctx: &mut SessionCtx,
    tag_in: Tag,
    tag_w: Tag,
    x: &RTensor,
    w: &RTensor,
    t: &TensorTriple,
    stride: u32,
    padding: Padding,
) -> Result<RTensor, ProtoError> {
    let out = match ctx.party {
        Party::P0 | Party::P1 => {
            let j = ctx.j();
            let e_own = sub_t(x, &t.a);
            let f_own = sub_t(w, &t.b);
            let peer = ctx.party.other_evaluator();
            let e_flat: Vec<u64> = e_own.iter().copied().collect();
            let f_flat: Vec<u64> = f_own.iter().copied().collect();
            ctx.send_ring(peer, tag_in, &e_flat)?;
            ctx.send_ring(peer, tag_w, &f_flat)?;
            let e_theirs = ctx.recv_ring(peer, tag_in)?;
            let f_theirs = ctx.recv_ring(peer, tag_w)?;
            let e = add_t(&e_own, &same_shape(e_theirs, e_own.shape()));
            let f = add_t(&f_own, &same_shape(f_theirs, f_own.shape()));
            let mut z = add_t(
                &conv_raw(&e, &t.b, stride, padding),
                &conv_raw(&t.a, &f, stride, padding),
            );
            z = add_t(&z, &t.c);
            if j == 0 {
                z = add_t(&z, &conv_raw(&e, &f, stride, padding));
            }
            z
        }
        Party::P2 => ArrayD::zeros(IxDyn(&[0])),
    };
    ctx.round();
    Ok(out)
}

fn same_shape(flat: Vec<u64>, shape: &[usize]) -> RTensor {
    ArrayD::from_shape_vec(IxDyn(shape), flat).expect("peer opening matches own shape")
}

/// Deals one matrix–vector triple (`w_shape = [o, n]`, input `[n]`).
pub fn deal_linear_triples(
    ctx: &mut SessionCtx,
    tag: Tag,
    n: usize,
    o: usize,
) -> Result<TensorTriple, ProtoError> {
    let out = match ctx.party {
        Party::P0 | Party::P1 => {
            let rng = ctx.seeds.with(Party::P2);
            let a = draw_tensor(rng, &[n]);
            let b = draw_tensor(rng, &[o, n]);
            let c = if ctx.party == Party::P0 {
                draw_tensor(ctx.seeds.with(Party::P2), &[o])
            } else {
                let flat = ctx.recv_ring(Party::P2, tag)?;
                same_shape(flat, &[o])
            };
            TensorTriple { a, b, c }
        }
        Party::P2 => {
            let rng0 = ctx.seeds.with(Party::P0);
            let a0 = draw_tensor(rng0, &[n]);
            let b0 = draw_tensor(rng0, &[o, n]);
            let rng1 = ctx.seeds.with(Party::P1);
            let a1 = draw_tensor(rng1, &[n]);
            let b1 = draw_tensor(rng1, &[o, n]);
            let c = matvec_raw(&add_t(&b0, &b1), &add_t(&a0, &a1));
            let c0 = draw_tensor(ctx.seeds.with(Party::P0), &[o]);
            let c1 = sub_t(&c, &c0);
            let flat: Vec<u64> = c1.iter().copied().collect();
            ctx.send_ring(Party::P1, tag, &flat)?;
            empty_triple()
        }
    };
    ctx.round();
    Ok(out)
}

/// Opens masked input and weights, returning shares of `W·x`.
pub fn linear_open(
    ctx: &mut SessionCtx,
    tag_in: Tag,
    tag_w: Tag,
    x: &RTensor,
    w: &RTensor,
    t: &TensorTriple,
) -> Result<RTensor, ProtoError> {
    let out = match ctx.party {
        Party::P0 | Party::P1 => {
            let j = ctx.j();
            let e_own = sub_t(x, &t.a);
            let f_own = sub_t(w, &t.b);
            let peer = ctx.party.other_evaluator();
            let e_flat: Vec<u64> = e_own.iter().copied().collect();
            let f_flat: Vec<u64> = f_own.iter().copied().collect();
            ctx.send_ring(peer, tag_in, &e_flat)?;
            ctx.send_ring(peer, tag_w, &f_flat)?;
            let e_theirs = ctx.recv_ring(peer, tag_in)?;
            let f_theirs = ctx.recv_ring(peer, tag_w)?;
            let e = add_t(&e_own, &same_shape(e_theirs, e_own.shape()));
            let f = add_t(&f_own, &same_shape(f_theirs, f_own.shape()));
            let mut z = add_t(&matvec_raw(&t.b, &e), &matvec_raw(&f, &t.a));
            z = add_t(&z, &t.c);
            if j == 0 {
                z = add_t(&z, &matvec_raw(&f, &e));
            }
            z
        }
        Party::P2 => ArrayD::zeros(IxDyn(&[0])),
    };
    ctx.round();
    Ok(out)
}
