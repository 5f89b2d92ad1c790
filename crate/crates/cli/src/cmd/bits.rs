//! Compare-window analysis: how many high and low bits the sign protocol
//! can skip for a given model's activation distribution.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;

use mpcnn_core::bits::{error_surface, recommend_bits};
use mpcnn_core::tensor::graph::ModelGraph;
use mpcnn_core::tensor::interp::FloatInterp;
use mpcnn_core::ring::FixedPointCodec;

use crate::config::FileConfig;
use crate::errors::Failure;
use crate::util::{self, print_json};

#[derive(Args)]
pub struct BitsArgs {
    /// Model whose activations to sample.
    #[arg(long)]
    pub model: PathBuf,
    /// Fixed-point/compare profile supplying the encoding.
    #[arg(long)]
    pub profile: Option<String>,
    /// Calibration inputs to sample activations from.
    #[arg(long)]
    pub samples: Option<u32>,
    /// Acceptable sign-flip probability per comparison.
    #[arg(long)]
    pub target_error: Option<f64>,
    /// Monte-Carlo trials per (window) error measurement.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Also sweep the full (skipped-high, skipped-low) grid to this CSV.
    #[arg(long, value_name = "CSV")]
    pub surface: Option<PathBuf>,
}

pub fn analyze(args: &BitsArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let model = util::load_model(&args.model)?;
    let profile = util::resolve_profile(args.profile.as_deref(), cfg)?;
    let samples = args.samples.or(cfg.analyze_bits.samples).unwrap_or(64);
    let target = args
        .target_error
        .or(cfg.analyze_bits.target_error)
        .unwrap_or_else(|| 2f64.powi(-12));
    let trials = args.trials.or(cfg.analyze_bits.trials).unwrap_or(100_000);

    let ring = activation_samples(&model, &profile.codec(), samples, seed)?;
    if ring.is_empty() {
        return Err(Failure::config("model has no activation layers to sample"));
    }

    let rec = recommend_bits(&ring, 64, target, trials, seed)?;
    let surface = match &args.surface {
        Some(path) => {
            write_surface(path, &ring, seed)?;
            Some(path.clone())
        }
        None => None,
    };
    print_json(&json!({
        "profile": profile.name,
        "activation_samples": ring.len(),
        "target_error": target,
        "n": rec.config.n,
        "k_msb": rec.config.k_msb,
        "k_lsb": rec.config.k_lsb,
        "window": rec.config.width(),
        "measured_error": rec.measured_error,
        "warning": rec.warning,
        "surface": surface,
    }))
}

/// Run the float interpreter over seeded inputs and encode every
/// pre-activation value into the ring — the population the sign protocol
/// actually compares.
pub fn activation_samples(
    model: &ModelGraph,
    codec: &FixedPointCodec,
    samples: u32,
    seed: u64,
) -> Result<Vec<u64>> {
    let interp = FloatInterp::new(model)?;
    let mut ring = Vec::new();
    for i in 0..u64::from(samples) {
        let x = mpcnn_core::tensor::modelio::random_input(
            &model.input_shape_dims(),
            seed.wrapping_add(i),
        );
        for t in interp.pre_activations(&x, None)? {
            for &v in t.iter() {
                ring.push(codec.encode(v).context("activation exceeds the fixed-point range")?);
            }
        }
    }
    Ok(ring)
}

/// Sweep a fixed (skipped-high, skipped-low) grid over the sampled
/// activations and write the measured sign-flip rates as CSV.
pub fn write_surface(path: &std::path::Path, ring: &[u64], seed: u64) -> Result<()> {
    let k_msb = [0, 8, 16, 24, 32, 40, 43, 48];
    let k_lsb: Vec<u32> = (0..=8).collect();
    let grid = error_surface(ring, 64, &k_msb, &k_lsb, seed)?;
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing surface {}", path.display()))?;
    w.write_record(["k_msb", "k_lsb", "error"])?;
    for (m, l, e) in grid {
        w.write_record([m.to_string(), l.to_string(), format!("{e:.6e}")])?;
    }
    w.flush()?;
    Ok(())
}
