//! Budget planning: per-channel distortion estimation and knapsack
//! allocation of the sign-decision budget.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde_json::json;

use mpcnn_core::planner::distortion::{build_table, DistortionTable};
use mpcnn_core::planner::mckp::{selection_to_plan, solve};
use mpcnn_core::planner::plans::{additive_distortion, constant_plan, fraction_budget, shuffled_plan};
use mpcnn_core::tensor::modelio::random_input;
use mpcnn_core::tensor::FTensor;

use crate::config::FileConfig;
use crate::errors::Failure;
use crate::util::{self, print_json};

#[derive(Args)]
pub struct EstimateArgs {
    /// Model manifest to profile.
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV (one row per channel/patch-shape candidate).
    #[arg(long)]
    pub out: PathBuf,
    /// Calibration inputs to average distortion over.
    #[arg(long)]
    pub samples: Option<u32>,
}

/// Build the per-channel candidate table: for every channel and every patch
/// shape that divides it, the sign-decision weight and the pre-logits
/// distortion averaged over seeded calibration inputs.
pub fn estimate(args: &EstimateArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let model = util::load_model(&args.model)?;
    let samples = args.samples.or(cfg.estimate.samples).unwrap_or(64);
    if samples == 0 {
        return Err(Failure::config("--samples must be at least 1"));
    }
    let inputs = calibration_inputs(&model, samples, seed);
    let table = build_table(&model, &inputs)?;
    table.write_csv(&args.out)?;
    let candidates: usize = table.channels.iter().map(|c| c.items.len()).sum();
    print_json(&json!({
        "table": args.out,
        "channels": table.channels.len(),
        "candidates": candidates,
        "samples": samples,
        "seed": seed,
    }))
}

pub fn calibration_inputs(
    model: &mpcnn_core::tensor::graph::ModelGraph,
    samples: u32,
    seed: u64,
) -> Vec<FTensor> {
    (0..u64::from(samples))
        .map(|i| random_input(&model.input_shape_dims(), seed.wrapping_add(i)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanMode {
    /// Exact knapsack allocation against the distortion table.
    Optimal,
    /// Same patch shape everywhere; ignores the table and budget.
    Constant,
    /// Optimal weights reassigned to random channels within each layer — a
    /// control showing placement matters, not just total spend.
    Shuffled,
}

impl PlanMode {
    fn label(self) -> &'static str {
        match self {
            PlanMode::Optimal => "optimal",
            PlanMode::Constant => "constant",
            PlanMode::Shuffled => "shuffled",
        }
    }
}

#[derive(Args)]
pub struct PlanArgs {
    /// Model the plan is for.
    #[arg(long)]
    pub model: PathBuf,
    /// Distortion table CSV from `estimate` (required for optimal/shuffled).
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Output plan JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Absolute sign-decision budget.
    #[arg(long, conflicts_with = "budget_frac")]
    pub budget: Option<u64>,
    /// Budget as a fraction of the all-elementwise spend.
    #[arg(long)]
    pub budget_frac: Option<f64>,
    /// Round candidate weights up to multiples of this before solving.
    #[arg(long)]
    pub granularity: Option<u64>,
    #[arg(long, value_enum, default_value_t = PlanMode::Optimal)]
    pub mode: PlanMode,
    /// Patch height for constant mode.
    #[arg(long, default_value_t = 4)]
    pub ph: u32,
    /// Patch width for constant mode.
    #[arg(long, default_value_t = 4)]
    pub pw: u32,
}

pub fn plan(args: &PlanArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let model = util::load_model(&args.model)?;
    let dims = model.channel_dims()?;
    let granularity = args.granularity.or(cfg.plan.granularity).unwrap_or(1);

    let budget = |model: &mpcnn_core::tensor::graph::ModelGraph| -> Result<u64> {
        if let Some(b) = args.budget {
            return Ok(b);
        }
        match args.budget_frac.or(cfg.plan.budget_frac) {
            Some(f) => Ok(fraction_budget(model, f)?),
            None => Err(Failure::config("planning needs --budget or --budget-frac")),
        }
    };
    let load_table = || -> Result<DistortionTable> {
        let Some(path) = args.table.as_deref() else {
            return Err(Failure::config(format!(
                "mode {} needs --table (produce one with `estimate`)",
                args.mode.label()
            )));
        };
        DistortionTable::read_csv(path)
            .with_context(|| format!("reading table {}", path.display()))
    };

    let (plan, detail) = match args.mode {
        PlanMode::Constant => {
            let p = constant_plan(&model, args.ph, args.pw)?;
            let weight = p.total_weight(&dims);
            (p, json!({ "weight": weight }))
        }
        PlanMode::Optimal => {
            let table = load_table()?;
            let budget = budget(&model)?;
            let sel = solve(&table, budget, granularity)?;
            let p = selection_to_plan(&table, &sel, budget);
            (
                p,
                json!({
                    "budget": budget,
                    "weight": sel.total_weight,
                    "additive_distortion": sel.total_distortion,
                }),
            )
        }
        PlanMode::Shuffled => {
            let table = load_table()?;
            let budget = budget(&model)?;
            let sel = solve(&table, budget, granularity)?;
            let optimal = selection_to_plan(&table, &sel, budget);
            let p = shuffled_plan(&model, &optimal, seed)?;
            let weight = p.total_weight(&dims);
            let distortion = additive_distortion(&table, &p)?;
            (
                p,
                json!({
                    "budget": budget,
                    "weight": weight,
                    "additive_distortion": distortion,
                }),
            )
        }
    };

    fs::write(&args.out, plan.to_json())
        .with_context(|| format!("writing plan {}", args.out.display()))?;
    let mut summary = json!({
        "plan": args.out,
        "mode": args.mode.label(),
        "channels": plan.entries.len(),
    });
    merge(&mut summary, detail);
    print_json(&summary)
}

fn merge(into: &mut serde_json::Value, from: serde_json::Value) {
    if let (Some(a), Some(b)) = (into.as_object_mut(), from.as_object()) {
        for (k, v) in b {
            a.insert(k.clone(), v.clone());
        }
    }
}
