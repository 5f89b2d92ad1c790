//! End-to-end checks of the share-level protocols over the in-process mesh:
//! every test runs all three parties and verifies reconstructed results
//! against plain arithmetic.

mod common;

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use mpcnn_core::profile::Profile;
use mpcnn_core::ring::drelu_plain;
use mpcnn_core::tensor::Padding;

use mpcnn_proto::protocols::convert::share_convert;
use mpcnn_proto::protocols::mul::{
    conv_open, conv_raw, deal_conv_triples, deal_gate_triples, deal_linear_triples, deal_triples,
    gate_open, linear_open, matvec_raw, mul_open, DealRound,
};
use mpcnn_proto::protocols::sign::drelu;
use mpcnn_proto::protocols::{msb_w, odd_add, odd_new, width_mask};
use mpcnn_proto::runner::run_parties;
use mpcnn_proto::wire::Tag;

use common::{mixed_values, split_shares};

fn exact() -> Profile {
    mpcnn_core::profile::preset("exact-64bit").unwrap()
}

#[test]
fn share_convert_reconstructs_full_width() {
    let mut values = mixed_values(200, 11);
    values.extend([0, 1, 2, u64::MAX - 1, 1u64 << 63, (1u64 << 63) - 1]);
    let n = values.len();
    let outs = run_parties(&exact(), 77, |ctx| {
        let shares = split_shares(&values, 4242, ctx.party.evaluator());
        share_convert(ctx, 64, n, &shares)
    })
    .unwrap();
    for e in 0..n {
        let got = odd_add(outs[0][e], outs[1][e], 64);
        assert_eq!(got, odd_new(values[e], 64), "value {:#x}", values[e]);
    }
}

#[test]
fn share_convert_dense_small_width() {
    // Every representable value (the modulus itself is excluded by the
    // caller contract) under several share splits, one batched session.
    let width = 6;
    let mut values = Vec::new();
    for _split in 0..4 {
        values.extend(0..width_mask(width));
    }
    let n = values.len();
    let outs = run_parties(&exact(), 99, |ctx| {
        let shares = split_shares(&values, 777, ctx.party.evaluator())
            .iter()
            .map(|s| s & width_mask(width))
            .collect::<Vec<u64>>();
        share_convert(ctx, width, n, &shares)
    })
    .unwrap();
    for e in 0..n {
        let got = odd_add(outs[0][e], outs[1][e], width);
        assert_eq!(got, odd_new(values[e], width), "value {}", values[e]);
    }
}

#[test]
fn drelu_exact_matches_plain_sign() {
    let mut values = mixed_values(300, 5);
    values.extend([0, 1, u64::MAX, (1u64 << 61) - 1, (1u64 << 61).wrapping_neg()]);
    let n = values.len();
    let outs = run_parties(&exact(), 13, |ctx| {
        let shares = split_shares(&values, 31337, ctx.party.evaluator());
        drelu(ctx, n, &shares)
    })
    .unwrap();
    for e in 0..n {
        let got = outs[0][e].wrapping_add(outs[1][e]);
        assert_eq!(got, drelu_plain(values[e]) as u64, "value {:#x}", values[e]);
    }
}

#[test]
fn drelu_approx_matches_windowed_share_model() {
    // At reduced width the secure path decides by the top bit of the
    // windowed share sum; mirror that model exactly, including the
    // modulus-collapse edge (which resolves to "non-negative").
    let profile = mpcnn_core::profile::preset("classification-16bit").unwrap();
    let cfg = profile.compare;
    let width = cfg.window();
    assert_eq!(width, 16);

    let mut values = mixed_values(300, 23);
    values.extend([0, 1, u64::MAX]);
    let n = values.len();
    let split_seed = 909;
    let outs = run_parties(&profile, 21, |ctx| {
        let shares = split_shares(&values, split_seed, ctx.party.evaluator());
        drelu(ctx, n, &shares)
    })
    .unwrap();

    let s0 = split_shares(&values, split_seed, Some(0));
    let s1 = split_shares(&values, split_seed, Some(1));
    for e in 0..n {
        let w0 = mpcnn_core::ring::window_value(s0[e], cfg.ignore_msb, cfg.ignore_lsb);
        let w1 = mpcnn_core::ring::window_value(s1[e], cfg.ignore_msb, cfg.ignore_lsb);
        let u = w0.wrapping_add(w1) & width_mask(width);
        let expect = if u == width_mask(width) { 1 } else { 1 - msb_w(u, width) };
        let got = outs[0][e].wrapping_add(outs[1][e]);
        assert_eq!(got, expect, "value {:#x} window-sum {:#x}", values[e], u);
    }
}

#[test]
fn beaver_multiply_reconstructs_products() {
    let x = mixed_values(100, 41);
    let y = mixed_values(100, 43);
    let n = x.len();
    let outs = run_parties(&exact(), 3, |ctx| {
        let xs = split_shares(&x, 1001, ctx.party.evaluator());
        let ys = split_shares(&y, 1002, ctx.party.evaluator());
        let t = deal_triples(ctx, Tag::SignMulC1, n, DealRound::Counted)?;
        mul_open(ctx, Tag::SignMulOpen, &xs, &ys, &t)
    })
    .unwrap();
    for e in 0..n {
        let got = outs[0][e].wrapping_add(outs[1][e]);
        assert_eq!(got, x[e].wrapping_mul(y[e]));
    }
}

#[test]
fn gate_multiply_scales_whole_patches() {
    let sizes = [3usize, 1, 4, 2, 5];
    let bits: Vec<u64> = vec![1, 0, 1, 0, 1];
    let values = mixed_values(sizes.iter().sum(), 67);
    let outs = run_parties(&exact(), 29, |ctx| {
        let bs = split_shares(&bits, 2001, ctx.party.evaluator());
        let vs = split_shares(&values, 2002, ctx.party.evaluator());
        let t = deal_gate_triples(ctx, Tag::GateC1, &sizes, DealRound::Counted)?;
        gate_open(ctx, Tag::GateOpen, &bs, &vs, &sizes, &t)
    })
    .unwrap();
    let mut k = 0;
    for (p, &len) in sizes.iter().enumerate() {
        for _ in 0..len {
            let got = outs[0][k].wrapping_add(outs[1][k]);
            assert_eq!(got, values[k].wrapping_mul(bits[p]), "patch {p}");
            k += 1;
        }
    }
}

#[test]
fn masked_convolution_matches_plain() {
    let mut rng = ChaCha20Rng::seed_from_u64(505);
    let x: Vec<u64> = (0..2 * 5 * 5).map(|_| rng.gen_range(0..1u64 << 16)).collect();
    let w: Vec<u64> = (0..3 * 2 * 3 * 3).map(|_| rng.gen_range(0..1u64 << 16)).collect();
    let xt = ArrayD::from_shape_vec(IxDyn(&[2, 5, 5]), x.clone()).unwrap();
    let wt = ArrayD::from_shape_vec(IxDyn(&[3, 2, 3, 3]), w.clone()).unwrap();

    for (stride, padding) in [(1u32, Padding::Same), (2, Padding::Valid)] {
        let outs = run_parties(&exact(), 31, |ctx| {
            let xs = split_shares(&x, 3001, ctx.party.evaluator());
            let ws = split_shares(&w, 3002, ctx.party.evaluator());
            let t = deal_conv_triples(ctx, Tag::ConvC1, &[2, 5, 5], &[3, 2, 3, 3], stride, padding)?;
            if ctx.is_dealer() {
                conv_open(ctx, Tag::ConvMaskIn, Tag::ConvMaskW, &t.a, &t.b, &t, stride, padding)?;
                return Ok(ArrayD::zeros(IxDyn(&[0])));
            }
            let xs = ArrayD::from_shape_vec(IxDyn(&[2, 5, 5]), xs).unwrap();
            let ws = ArrayD::from_shape_vec(IxDyn(&[3, 2, 3, 3]), ws).unwrap();
            conv_open(ctx, Tag::ConvMaskIn, Tag::ConvMaskW, &xs, &ws, &t, stride, padding)
        })
        .unwrap();
        let plain = conv_raw(&xt, &wt, stride, padding);
        let mut got = outs[0].clone();
        got.zip_mut_with(&outs[1], |a, b| *a = a.wrapping_add(*b));
        assert_eq!(got, plain, "stride {stride}");
    }
}

#[test]
fn masked_matvec_matches_plain() {
    let mut rng = ChaCha20Rng::seed_from_u64(606);
    let x: Vec<u64> = (0..6).map(|_| rng.gen_range(0..1u64 << 20)).collect();
    let w: Vec<u64> = (0..4 * 6).map(|_| rng.gen_range(0..1u64 << 20)).collect();
    let xt = ArrayD::from_shape_vec(IxDyn(&[6]), x.clone()).unwrap();
    let wt = ArrayD::from_shape_vec(IxDyn(&[4, 6]), w.clone()).unwrap();

    let outs = run_parties(&exact(), 37, |ctx| {
        let xs = split_shares(&x, 4001, ctx.party.evaluator());
        let ws = split_shares(&w, 4002, ctx.party.evaluator());
        let t = deal_linear_triples(ctx, Tag::LinC1, 6, 4)?;
        if ctx.is_dealer() {
            linear_open(ctx, Tag::LinMaskIn, Tag::LinMaskW, &t.a, &t.b, &t)?;
            return Ok(ArrayD::zeros(IxDyn(&[0])));
        }
        let xs = ArrayD::from_shape_vec(IxDyn(&[6]), xs).unwrap();
        let ws = ArrayD::from_shape_vec(IxDyn(&[4, 6]), ws).unwrap();
        linear_open(ctx, Tag::LinMaskIn, Tag::LinMaskW, &xs, &ws, &t)
    })
    .unwrap();
    let plain = matvec_raw(&wt, &xt);
    let mut got = outs[0].clone();
    got.zip_mut_with(&outs[1], |a, b| *a = a.wrapping_add(*b));
    assert_eq!(got, plain);
}

#[test]
fn drelu_books_exact_traffic_and_rounds() {
    // One sign decision at full width: 14 ring lanes and 6 width-byte field
    // vectors, across 9 waves (4 conversion + 5 extraction).
    let values = vec![42u64];
    let outs = run_parties(&exact(), 1, |ctx| {
        ctx.layer = 7;
        let shares = split_shares(&values, 1, ctx.party.evaluator());
        drelu(ctx, 1, &shares)?;
        Ok(ctx.ledger.clone())
    })
    .unwrap();
    let mut merged = outs[0].clone();
    merged.merge(&outs[1]);
    merged.merge(&outs[2]);
    assert_eq!(merged.layer_payload(7), 14 * 8 + 6 * 64);
    assert_eq!(merged.rounds_for_layer(7), 9);
}
