//! Release acceptance gate.
//!
//! Each test checks one release criterion end to end and prints a single
//! verdict line (visible with `--nocapture`); the same text rides the assert
//! so failures are self-describing in the default harness output too.

mod common;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use mpcnn_core::bits::{uniform_compare_error, uniform_error_bound, TruncationConfig};
use mpcnn_core::comm::{self, exact, CommParams};
use mpcnn_core::patch::{PatchPlan, PatchSpec, PlanEntry};
use mpcnn_core::planner::distortion::{
    build_table, CandidateCost, ChannelCandidates, DistortionTable,
};
use mpcnn_core::planner::mckp::{brute_force, solve};
use mpcnn_core::planner::plans::{
    additive_distortion, additive_vs_real, constant_plan, real_distortion,
};
use mpcnn_core::profile::{preset, Profile};
use mpcnn_core::ring::{bit_decompose, drelu_plain};
use mpcnn_core::tensor::interp::{FixedInterp, FloatInterp};
use mpcnn_core::tensor::modelio::{generate, random_input};
use mpcnn_core::tensor::{FTensor, ModelGraph, Shape};

use mpcnn_proto::protocols::pc::{pc_dealer, pc_evaluator, CompareJob};
use mpcnn_proto::protocols::sign::drelu;
use mpcnn_proto::runner::{run_inference_local, run_parties};
use mpcnn_proto::seeds::draw_field;
use mpcnn_proto::wire::Tag;

use common::split_shares;

/// One verdict line per criterion, printed before the assert fires.
fn report(n: usize, what: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("acceptance {n:>2}/10 {verdict} — {what}: {detail}");
    assert!(ok, "acceptance criterion {n} ({what}): {detail}");
}

fn exact_profile() -> Profile {
    preset("exact-64bit").unwrap()
}

fn max_abs_diff(a: &FTensor, b: &FTensor) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn argmax(t: &FTensor) -> usize {
    t.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
        .expect("nonempty logits")
        .0
}

#[test]
fn c01_analytic_cost_table() {
    let rows = comm::table(&CommParams::typical());
    let shown: Vec<i64> = rows.iter().map(|r| r.displayed).collect();
    let want = vec![21, 520, 218, 52, 22, 42, 27, 583, 70];
    let ok = shown == want;
    let mut detail = String::from("displayed MB at the typical operating point:");
    for (row, s) in rows.iter().zip(&shown) {
        write!(detail, " {}={}", row.kind.label(), s).unwrap();
    }
    report(1, "analytic cost table", ok, &detail);
}

/// Closed-form per-layer traffic (bytes) a run should book, derived only
/// from the model shapes. Activation layers assume plain elementwise gating.
fn closed_form_layer_bytes(model: &ModelGraph, width: u64) -> Vec<(u16, u64)> {
    let shapes = model.infer_shapes().unwrap();
    let (c, h, w) = model.input_shape;
    let mut cur = Shape::Chw(c, h, w);
    let mut out = Vec::new();
    for (id, layer) in model.layers.iter().enumerate() {
        let next = shapes[id];
        let bits = match layer {
            mpcnn_core::tensor::Layer::Conv2d { weight, .. } => {
                let ws = model.weight(weight).unwrap();
                exact::conv2d_bits(cur.len() as u64, next.len() as u64, ws.len() as u64, 64)
            }
            mpcnn_core::tensor::Layer::Linear { weight, .. } => {
                let ws = model.weight(weight).unwrap().shape().to_vec();
                exact::linear_bits(ws[1] as u64, ws[0] as u64, 64)
            }
            mpcnn_core::tensor::Layer::Relu => {
                let n = cur.len() as u64;
                exact::drelu_bits(n, width, 64, 8) + exact::relu_mult_bits(n, 64)
            }
            _ => 0,
        };
        out.push((id as u16, bits / 8));
        cur = next;
    }
    out
}

#[test]
fn c02_booked_traffic_equals_closed_forms() {
    let profile = exact_profile();
    let mut layers_checked = 0usize;
    let mut slack = 0u64;
    for name in ["tiny", "toy-cnn"] {
        let model = generate(name, 3).unwrap();
        let input = random_input(&model.input_shape_dims(), 1);
        let run = run_inference_local(&model, None, &profile, &input, 7).unwrap();
        for (layer, want) in closed_form_layer_bytes(&model, 64) {
            let got = run.ledger.layer_payload(layer);
            slack += got.abs_diff(want);
            layers_checked += 1;
        }
    }
    report(
        2,
        "traffic accounting",
        slack == 0,
        &format!(
            "{layers_checked} layers across tiny and toy-cnn, \
             {slack} bytes between booked and closed-form traffic"
        ),
    );
}

#[test]
fn c03_private_compare_exhaustive_width_6() {
    const WIDTH: u32 = 6;
    // Every (value, operand, mask bit) at width 6. The mask flips what the
    // dealer's bit means: masked = mask ⊕ (x > r). A masked "≤ r" becomes
    // "< r+1"; at r = 63 that covers the whole domain, so the outcome is
    // already public and the evaluators emit a forced vector instead.
    let mut cases = Vec::new();
    let mut jobs = Vec::new();
    for x in 0..64u64 {
        for r in 0..64u64 {
            for mask in 0..2u64 {
                cases.push((x, r, mask));
                jobs.push(match (mask, r) {
                    (0, _) => CompareJob::Greater { y: r },
                    (1, 63) => CompareJob::Forced { bit: 1 },
                    (1, _) => CompareJob::Less { y: r + 1 },
                    _ => unreachable!(),
                });
            }
        }
    }
    let outs = run_parties(&exact_profile(), 301, |ctx| {
        if ctx.is_dealer() {
            return Ok(Some(pc_dealer(ctx, Tag::ScCompare, WIDTH, cases.len())?));
        }
        // Both evaluators derive the same additive bit splits from a fixed
        // stream, so no coordination round is needed.
        let f = ctx.field();
        let j = ctx.j();
        let mut rng = ChaCha20Rng::seed_from_u64(0xB17D);
        let shares: Vec<Vec<u8>> = cases
            .iter()
            .map(|&(x, _, _)| {
                bit_decompose(x, WIDTH)
                    .iter()
                    .map(|&b| {
                        let s0 = draw_field(&mut rng, f.p);
                        if j == 0 {
                            s0
                        } else {
                            f.sub(b, s0)
                        }
                    })
                    .collect()
            })
            .collect();
        pc_evaluator(ctx, Tag::ScCompare, WIDTH, &jobs, &shares)?;
        Ok(None)
    })
    .unwrap();
    let bits = outs[2].as_ref().expect("dealer output");
    let mismatches = cases
        .iter()
        .zip(bits)
        .filter(|(&(x, r, mask), &bit)| bit != mask ^ u64::from(x > r))
        .count();
    report(
        3,
        "private compare",
        mismatches == 0,
        &format!(
            "exhaustive width-6 sweep, {} (value, operand, mask) cases, {mismatches} mismatches",
            cases.len()
        ),
    );
}

#[test]
fn c04_exact_sign_protocol_bulk() {
    const N: usize = 100_000;
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let lim = 1i64 << 20;
    let mut values: Vec<u64> =
        (0..N - 8).map(|_| rng.gen_range(-lim..=lim) as u64).collect();
    values.extend([
        0,
        1,
        u64::MAX,          // -1
        u64::MAX - 1,      // -2
        lim as u64,        //  2^20
        (-lim) as u64,     // -2^20
        (lim - 1) as u64,  //  2^20 - 1
        (1 - lim) as u64,  // -(2^20 - 1)
    ]);
    let outs = run_parties(&exact_profile(), 4001, |ctx| {
        let shares = split_shares(&values, 0xACCE, ctx.party.evaluator());
        drelu(ctx, values.len(), &shares)
    })
    .unwrap();
    let errors = (0..values.len())
        .filter(|&e| outs[0][e].wrapping_add(outs[1][e]) != drelu_plain(values[e]) as u64)
        .count();
    report(
        4,
        "exact sign extraction",
        errors == 0,
        &format!("{N} secrets in ±2^20 (boundaries included), {errors} sign errors"),
    );
}

#[test]
fn c05_secure_inference_matches_plaintext() {
    const RUNS: usize = 100;
    let model = generate("toy-cnn", 3).unwrap();
    let profile = exact_profile();
    let fixed = FixedInterp::new(&model, profile.codec()).unwrap();
    let float = FloatInterp::new(&model).unwrap();
    let mut max_err = 0.0f64;
    let mut agreements = 0usize;
    for i in 0..RUNS as u64 {
        let input = random_input(&model.input_shape_dims(), 9000 + i);
        let run = run_inference_local(&model, None, &profile, &input, 700 + i).unwrap();
        let fx = fixed.forward(&input, None).unwrap();
        let fl = float.forward(&input, None).unwrap();
        max_err = max_err.max(max_abs_diff(&run.output, &fx));
        agreements += usize::from(argmax(&run.output) == argmax(&fl));
    }
    let ok = max_err <= 1.0 / 256.0 && agreements == RUNS;
    report(
        5,
        "end-to-end agreement",
        ok,
        &format!(
            "{RUNS} toy-cnn inputs: max error vs fixed-point interpreter {max_err:.2e} \
             (bound 3.91e-3), argmax agreement with float {agreements}/{RUNS}"
        ),
    );
}

#[test]
fn c06_budget_allocator_is_optimal() {
    const INSTANCES: usize = 500;
    let mut rng = ChaCha20Rng::seed_from_u64(4242);
    let mut deviations = 0usize;
    for _ in 0..INSTANCES {
        let m = rng.gen_range(1..=12);
        // Keep the exhaustive reference tractable: cap the product of the
        // candidate counts, degrade late channels to a single item if needed.
        let mut product = 1u64;
        let channels: Vec<ChannelCandidates> = (0..m)
            .map(|c| {
                let mut k = rng.gen_range(1..=6usize);
                if product.saturating_mul(k as u64) > 200_000 {
                    k = 1;
                }
                product *= k as u64;
                let items = (0..k)
                    .map(|j| CandidateCost {
                        // Synthetic specs; the solver reads only the costs.
                        spec: PatchSpec::Patch { ph: j as u32 + 1, pw: 1 },
                        // A free first item keeps every budget feasible,
                        // mirroring identity in real tables.
                        weight: if j == 0 { 0 } else { rng.gen_range(0..=60) },
                        distortion: rng.gen::<f64>() * 10.0,
                    })
                    .collect();
                ChannelCandidates { channel: c as u32, layer: 1, h: 4, w: 4, items }
            })
            .collect();
        let table = DistortionTable { channels, samples: 1 };
        let budget = rng.gen_range(0..=200);
        let dp = solve(&table, budget, 1).unwrap();
        let bf = brute_force(&table, budget).unwrap();
        let same = dp.total_distortion.to_bits() == bf.total_distortion.to_bits()
            && dp.total_weight == bf.total_weight
            && dp.total_weight <= budget;
        deviations += usize::from(!same);
    }
    report(
        6,
        "budget allocator",
        deviations == 0,
        &format!(
            "{INSTANCES} random instances (≤12 channels, ≤6 candidates, budget ≤200): \
             {deviations} deviations from exhaustive search"
        ),
    );
}

#[test]
fn c07_truncated_compare_error_rate() {
    let cfg = TruncationConfig::new(16, 0, 5).unwrap();
    let bound = uniform_error_bound(16, 5); // 2^-12
    let measured = uniform_compare_error(cfg, 1_000_000, 99);
    let ratio = measured / bound;
    let ok = (0.5..=2.0).contains(&ratio);
    report(
        7,
        "truncated compare error",
        ok,
        &format!(
            "16-bit uniform operands, 5 low bits dropped, 10^6 trials: \
             measured {measured:.3e} vs analytic {bound:.3e} (ratio {ratio:.2})"
        ),
    );
}

#[test]
fn c08_plan_weight_drives_executed_sign_decisions() {
    let model = generate("tiny", 3).unwrap();
    let dims = model.channel_dims().unwrap();
    let plan = PatchPlan::new(
        vec![
            PlanEntry { channel: 0, layer: 1, spec: PatchSpec::Patch { ph: 2, pw: 3 } },
            PlanEntry { channel: 1, layer: 1, spec: PatchSpec::Identity },
        ],
        None,
    );
    let profile = exact_profile();
    let input = random_input(&model.input_shape_dims(), 5);
    let gated = run_inference_local(&model, Some(&plan), &profile, &input, 11).unwrap();
    let baseline = run_inference_local(&model, None, &profile, &input, 11).unwrap();
    let ok = gated.drelu_count == 6
        && plan.total_weight(&dims) == 6
        && baseline.drelu_count == 72;
    report(
        8,
        "sign-decision budget",
        ok,
        &format!(
            "6×6 channel under 2×3 patches spends {} sign decisions (planned {}) \
             vs 36 per channel elementwise (baseline run: {})",
            gated.drelu_count,
            plan.total_weight(&dims),
            baseline.drelu_count
        ),
    );
}

#[test]
fn c09_additive_distortion_model() {
    let model = generate("toy-cnn", 3).unwrap();
    let inputs: Vec<FTensor> =
        (0..4).map(|i| random_input(&model.input_shape_dims(), 460 + i)).collect();
    let table = build_table(&model, &inputs).unwrap();

    // Plans touching one channel: the additive model has a single nonzero
    // term, so it must equal the measured distortion exactly.
    let mut worst_rel = 0.0f64;
    for (ch, spec) in [
        (1usize, PatchSpec::Patch { ph: 4, pw: 4 }),
        (4, PatchSpec::Patch { ph: 8, pw: 2 }),
        (6, PatchSpec::Identity),
    ] {
        let mut plan = constant_plan(&model, 1, 1).unwrap();
        plan.entries[ch].spec = spec;
        let da = additive_distortion(&table, &plan).unwrap();
        let dr = real_distortion(&model, &inputs, &plan).unwrap();
        let rel = (da - dr).abs() / dr.abs().max(f64::MIN_POSITIVE);
        worst_rel = worst_rel.max(rel);
    }

    // Whole-plan scatter: reported, not thresholded.
    let scatter = additive_vs_real(&model, &inputs, &table, 200, 17).unwrap();
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("plan_scatter.csv");
    let mut csv = String::from("plan,additive_distortion,measured_distortion\n");
    for (i, (a, r)) in scatter.points.iter().enumerate() {
        writeln!(csv, "{i},{a},{r}").unwrap();
    }
    std::fs::write(&path, csv).unwrap();

    let rho = scatter.spearman;
    let ok = worst_rel <= 1e-9 && scatter.points.len() == 200 && rho.is_some();
    report(
        9,
        "additive distortion model",
        ok,
        &format!(
            "single-channel plans match measured distortion to rel {worst_rel:.1e}; \
             200-plan scatter written to {} (Spearman rho {:.3}, reported without threshold)",
            path.display(),
            rho.unwrap_or(f64::NAN)
        ),
    );
}

#[test]
fn c10_scope() {
    report(
        10,
        "scope",
        true,
        "verified at desk scale: protocol correctness, byte-exact traffic accounting, \
         allocator optimality, and agreement with the plaintext pipeline; accuracy/mIoU \
         reproduction on full-scale vision models and cloud wall-clock benchmarks are \
         out of scope for this build",
    );
}
