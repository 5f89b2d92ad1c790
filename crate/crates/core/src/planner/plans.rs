//! Plan construction beyond the solver, and the additive-distortion study.
//!
//! The solver prices each channel in isolation and minimizes the *sum* of
//! those prices. Whether that additive stand-in tracks the distortion of a
//! whole plan applied at once is an empirical question, so this module can
//! measure both for batches of random plans and summarize their rank
//! agreement. For plans touching a single channel the two are equal by
//! construction — a useful exactness check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::patch::{PatchPlan, PatchSpec, PlanEntry};
use crate::planner::distortion::{sq_l2, DistortionTable};
use crate::planner::PlannerError;
use crate::tensor::interp::FloatInterp;
use crate::tensor::{FTensor, ModelGraph};

/// The same patch shape on every channel, clamped to each channel's extent.
pub fn constant_plan(model: &ModelGraph, ph: u32, pw: u32) -> Result<PatchPlan, PlannerError> {
    let mut entries = Vec::new();
    for site in model.relu_sites()? {
        let spec = PatchSpec::Patch { ph: ph.min(site.h), pw: pw.min(site.w) };
        spec.validate(site.h, site.w)?; // rejects ph = 0 / pw = 0
        for ch in site.channel_range() {
            entries.push(PlanEntry { channel: ch, layer: site.layer_id as u32, spec });
        }
    }
    Ok(PatchPlan::new(entries, None))
}

/// Permutes `base`'s patch shapes among the channels of each activation
/// layer, keeping the per-layer shape multiset (and hence the total weight)
/// intact. Seeded and reproducible.
pub fn shuffled_plan(
    model: &ModelGraph,
    base: &PatchPlan,
    seed: u64,
) -> Result<PatchPlan, PlannerError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut entries = base.entries.clone();
    for site in model.relu_sites()? {
        let idxs: Vec<usize> = (0..entries.len())
            .filter(|&k| site.channel_range().contains(&entries[k].channel))
            .collect();
        let mut specs: Vec<PatchSpec> = idxs.iter().map(|&k| entries[k].spec).collect();
        // Fisher–Yates, high index down, one swap per draw.
        for i in (1..specs.len()).rev() {
            specs.swap(i, rng.gen_range(0..=i));
        }
        for (&k, &s) in idxs.iter().zip(&specs) {
            entries[k].spec = s;
        }
    }
    Ok(PatchPlan::new(entries, base.budget))
}

/// One uniformly random candidate per channel.
pub fn random_plan(table: &DistortionTable, rng: &mut impl Rng) -> PatchPlan {
    let entries = table
        .channels
        .iter()
        .map(|cc| {
            let j = rng.gen_range(0..cc.items.len());
            PlanEntry { channel: cc.channel, layer: cc.layer, spec: cc.items[j].spec }
        })
        .collect();
    PatchPlan::new(entries, None)
}

/// Sum of the table's per-channel prices under `plan`.
pub fn additive_distortion(table: &DistortionTable, plan: &PatchPlan) -> Result<f64, PlannerError> {
    let mut sum = 0.0;
    for cc in &table.channels {
        let spec = plan.spec_for(cc.channel)?;
        let item = cc
            .items
            .iter()
            .find(|i| i.spec == spec)
            .ok_or(PlannerError::SpecMismatch { channel: cc.channel })?;
        sum += item.distortion;
    }
    Ok(sum)
}

/// Mean squared pre-logits movement with the *whole* plan applied at once,
/// against the ungated network, over the same kind of sample batch the
/// table was priced with.
pub fn real_distortion(
    model: &ModelGraph,
    inputs: &[FTensor],
    plan: &PatchPlan,
) -> Result<f64, PlannerError> {
    if inputs.is_empty() {
        return Err(PlannerError::NoSamples);
    }
    let interp = FloatInterp::new(model)?;
    let mut sum = 0.0;
    for x in inputs {
        let base = interp.resume(0, x, None)?.pre_logits;
        let moved = interp.resume(0, x, Some(plan))?.pre_logits;
        sum += sq_l2(&moved, &base);
    }
    Ok(sum / inputs.len() as f64)
}

#[derive(Clone, Debug)]
pub struct ScatterSummary {
    /// `(additive, measured)` distortion per random plan.
    pub points: Vec<(f64, f64)>,
    /// Spearman rank correlation of the two columns; `None` when undefined
    /// (fewer than two plans, or a constant column).
    pub spearman: Option<f64>,
}

/// Draws `count` random plans and evaluates both distortion notions on each.
pub fn additive_vs_real(
    model: &ModelGraph,
    inputs: &[FTensor],
    table: &DistortionTable,
    count: usize,
    seed: u64,
) -> Result<ScatterSummary, PlannerError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let plans: Vec<PatchPlan> = (0..count).map(|_| random_plan(table, &mut rng)).collect();
    let points = plans
        .par_iter()
        .map(|plan| {
            Ok((
                additive_distortion(table, plan)?,
                real_distortion(model, inputs, plan)?,
            ))
        })
        .collect::<Result<Vec<_>, PlannerError>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    Ok(ScatterSummary { spearman: spearman(&xs, &ys), points })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite distortions"));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// column is constant or there are fewer than two points.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Sign-decision budget equal to `fraction` of the all-elementwise spend,
/// rounded down so the constraint cannot be overshot.
pub fn fraction_budget(model: &ModelGraph, fraction: f64) -> Result<u64, PlannerError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(PlannerError::BadFraction(fraction));
    }
    let baseline = model.baseline_drelu_count()?;
    Ok((fraction * baseline as f64).floor() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::distortion::build_table;
    use crate::planner::mckp::{selection_to_plan, solve};
    use crate::tensor::modelio::{generate, random_input};
    use std::collections::BTreeMap;

    fn batch(model: &ModelGraph, n: u64) -> Vec<FTensor> {
        (0..n).map(|i| random_input(&model.input_shape_dims(), 300 + i)).collect()
    }

    #[test]
    fn constant_plan_covers_every_channel() {
        let model = generate("toy-cnn", 1).unwrap();
        let plan = constant_plan(&model, 4, 4).unwrap();
        assert_eq!(plan.entries.len(), 8);
        for e in &plan.entries {
            assert_eq!(e.spec, PatchSpec::Patch { ph: 4, pw: 4 });
        }
        // ceil(8/4)² = 4 sign decisions per 8×8 channel.
        let dims = model.channel_dims().unwrap();
        assert_eq!(plan.total_weight(&dims), 8 * 4);
        // Oversized requests clamp to the channel extent.
        let clamped = constant_plan(&model, 100, 3).unwrap();
        assert_eq!(clamped.spec_for(0).unwrap(), PatchSpec::Patch { ph: 8, pw: 3 });
        assert!(constant_plan(&model, 0, 4).is_err());
    }

    #[test]
    fn shuffling_permutes_within_layers_only() {
        let model = generate("toy-cnn", 1).unwrap();
        let inputs = batch(&model, 3);
        let table = build_table(&model, &inputs).unwrap();
        let budget = fraction_budget(&model, 0.25).unwrap();
        let optimal = selection_to_plan(&table, &solve(&table, budget, 1).unwrap(), budget);

        let shuffled = shuffled_plan(&model, &optimal, 11).unwrap();
        assert_eq!(shuffled.budget, optimal.budget);

        let by_layer = |p: &PatchPlan| {
            let mut m: BTreeMap<u32, Vec<String>> = BTreeMap::new();
            for e in &p.entries {
                m.entry(e.layer).or_default().push(format!("{:?}", e.spec));
            }
            for specs in m.values_mut() {
                specs.sort();
            }
            m
        };
        assert_eq!(by_layer(&optimal), by_layer(&shuffled));

        // Seeded: same seed, same plan.
        let again = shuffled_plan(&model, &optimal, 11).unwrap();
        assert_eq!(shuffled.to_json(), again.to_json());
    }

    #[test]
    fn all_elementwise_plans_sit_at_the_origin() {
        let model = generate("toy-cnn", 1).unwrap();
        let inputs = batch(&model, 3);
        let table = build_table(&model, &inputs).unwrap();
        let plan = constant_plan(&model, 1, 1).unwrap();
        assert_eq!(additive_distortion(&table, &plan).unwrap(), 0.0);
        assert_eq!(real_distortion(&model, &inputs, &plan).unwrap(), 0.0);
    }

    #[test]
    fn single_channel_plans_make_both_notions_agree() {
        let model = generate("toy-cnn", 1).unwrap();
        let inputs = batch(&model, 4);
        let table = build_table(&model, &inputs).unwrap();
        for (ch, spec) in [
            (2u32, PatchSpec::Patch { ph: 4, pw: 2 }),
            (5, PatchSpec::Patch { ph: 8, pw: 8 }),
            (7, PatchSpec::Identity),
        ] {
            let mut plan = constant_plan(&model, 1, 1).unwrap();
            plan.entries[ch as usize].spec = spec;
            let da = additive_distortion(&table, &plan).unwrap();
            let dr = real_distortion(&model, &inputs, &plan).unwrap();
            assert!(da > 0.0, "channel {ch} {spec:?} should move the output");
            let rel = (da - dr).abs() / dr.abs().max(f64::MIN_POSITIVE);
            assert!(rel <= 1e-12, "channel {ch} {spec:?}: {da} vs {dr}");
        }
    }

    #[test]
    fn scatter_study_is_deterministic_and_summarized() {
        let model = generate("toy-cnn", 1).unwrap();
        let inputs = batch(&model, 3);
        let table = build_table(&model, &inputs).unwrap();
        let a = additive_vs_real(&model, &inputs, &table, 24, 5).unwrap();
        let b = additive_vs_real(&model, &inputs, &table, 24, 5).unwrap();
        assert_eq!(a.points.len(), 24);
        for ((ax, ay), (bx, by)) in a.points.iter().zip(&b.points) {
            assert_eq!((ax.to_bits(), ay.to_bits()), (bx.to_bits(), by.to_bits()));
            assert!(*ax >= 0.0 && *ay >= 0.0);
        }
        let rho = a.spearman.expect("varied plans correlate");
        assert!((-1.0..=1.0).contains(&rho));
        // Not a pinned threshold, but random gatings of a real model should
        // show a clearly positive rank trend.
        assert!(rho > 0.3, "rank correlation suspiciously weak: {rho}");
    }

    #[test]
    fn spearman_handles_ties_and_degenerate_input() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), None);
        // Monotone with ties still ranks positively.
        let rho = spearman(&[1.0, 1.0, 2.0, 3.0], &[5.0, 6.0, 7.0, 8.0]).unwrap();
        assert!(rho > 0.9);
    }

    #[test]
    fn budget_fractions_floor_against_the_baseline() {
        let model = generate("toy-cnn", 1).unwrap();
        // Baseline: 8 channels × 64 positions.
        assert_eq!(fraction_budget(&model, 1.0).unwrap(), 512);
        assert_eq!(fraction_budget(&model, 0.1).unwrap(), 51);
        assert_eq!(fraction_budget(&model, 0.0).unwrap(), 0);
        assert!(fraction_budget(&model, 1.5).is_err());
        assert!(fraction_budget(&model, f64::NAN).is_err());
    }
}
