//! One-shot artifact bundle: every analysis the engine supports, written as
//! CSVs plus a summary, for a given model. Deterministic in (model, seed) —
//! rerunning overwrites with byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;

use mpcnn_core::comm::{relu_cost_sweep, table, CommParams};
use mpcnn_core::planner::distortion::build_table;
use mpcnn_core::planner::mckp::solve;
use mpcnn_core::planner::plans::{additive_vs_real, fraction_budget};
use mpcnn_core::tensor::modelio::model_hash;

use crate::cmd::bits::{activation_samples, write_surface};
use crate::cmd::plan::calibration_inputs;
use crate::config::FileConfig;
use crate::util::{self, print_json};

#[derive(Args)]
pub struct ReportArgs {
    /// Model manifest to report on.
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory for the CSVs and summary.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Fixed-point/compare profile (feeds the bit-width analysis).
    #[arg(long)]
    pub profile: Option<String>,
    /// Calibration inputs for distortion and activation sampling.
    #[arg(long)]
    pub samples: Option<u32>,
    /// Random plans for the additive-vs-measured scatter.
    #[arg(long)]
    pub plans: Option<u32>,
    /// Image sizes for the activation-cost share sweep.
    #[arg(long, value_delimiter = ',')]
    pub image_sizes: Vec<u32>,
}

pub fn report(args: &ReportArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let model = util::load_model(&args.model)?;
    let profile = util::resolve_profile(args.profile.as_deref(), cfg)?;
    let samples = args.samples.or(cfg.report.samples).unwrap_or(16);
    let plans = args.plans.or(cfg.report.plans).unwrap_or(200);
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    // Analytic per-layer traffic at the typical operating point.
    let cost_path = args.out.join("cost_table.csv");
    write_cost_table(&cost_path)?;

    // Share of a secure run spent on sign decisions as images grow.
    let sizes = if args.image_sizes.is_empty() {
        vec![8, 16, 32, 64, 128, 256]
    } else {
        args.image_sizes.clone()
    };
    let fraction_path = args.out.join("relu_fraction.csv");
    write_relu_fraction(&fraction_path, &model, &sizes)?;

    // Distortion table feeds both the scatter and the budget sweep.
    let inputs = calibration_inputs(&model, samples, seed);
    let dist_table = build_table(&model, &inputs)?;
    let scatter = additive_vs_real(&model, &inputs, &dist_table, plans as usize, seed)?;
    let scatter_path = args.out.join("plan_scatter.csv");
    write_scatter(&scatter_path, &scatter.points)?;

    let sweep_path = args.out.join("budget_sweep.csv");
    write_budget_sweep(&sweep_path, &model, &dist_table)?;

    // Compare-window error surface over this model's own activations.
    let ring = activation_samples(&model, &profile.codec(), samples, seed)?;
    let surface_path = args.out.join("error_surface.csv");
    write_surface(&surface_path, &ring, seed)?;

    let summary = json!({
        "model": args.model,
        "model_hash": hex::encode(model_hash(&model)),
        "profile": profile.name,
        "seed": seed,
        "samples": samples,
        "plans": plans,
        "spearman": scatter.spearman,
        "files": {
            "cost_table": cost_path,
            "relu_fraction": fraction_path,
            "plan_scatter": scatter_path,
            "budget_sweep": sweep_path,
            "error_surface": surface_path,
        },
    });
    let summary_path = args.out.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;

    print_json(&json!({
        "out": args.out,
        "summary": summary_path,
        "spearman": scatter.spearman,
    }))
}

fn write_cost_table(path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["variant", "bits", "mb", "displayed_mb"])?;
    for row in table(&CommParams::typical()) {
        w.write_record([
            row.kind.label().to_string(),
            format!("{:.0}", row.bits),
            format!("{:.4}", row.mb),
            row.displayed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_relu_fraction(
    path: &Path,
    model: &mpcnn_core::tensor::graph::ModelGraph,
    sizes: &[u32],
) -> Result<()> {
    let sweep = relu_cost_sweep(model, sizes)?;
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["image_size", "relu_fraction"])?;
    for (size, frac) in sweep {
        w.write_record([size.to_string(), format!("{frac:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

fn write_scatter(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["plan", "additive_distortion", "measured_distortion"])?;
    for (i, (additive, measured)) in points.iter().enumerate() {
        w.write_record([i.to_string(), format!("{additive:.9e}"), format!("{measured:.9e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Optimal weight and additive distortion at 0%, 10%, …, 100% of the
/// all-elementwise budget — the bandwidth/quality trade-off curve.
fn write_budget_sweep(
    path: &Path,
    model: &mpcnn_core::tensor::graph::ModelGraph,
    dist_table: &mpcnn_core::planner::distortion::DistortionTable,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["budget_fraction", "budget", "weight", "additive_distortion"])?;
    for pct in (0..=100).step_by(10) {
        let fraction = f64::from(pct) / 100.0;
        let budget = fraction_budget(model, fraction)?;
        match solve(dist_table, budget, 1) {
            Ok(sel) => w.write_record([
                format!("{fraction:.1}"),
                budget.to_string(),
                sel.total_weight.to_string(),
                format!("{:.9e}", sel.total_distortion),
            ])?,
            // Tiny budgets below the lightest feasible plan: skip the row
            // rather than fail the whole report.
            Err(_) => continue,
        }
    }
    w.flush()?;
    Ok(())
}
