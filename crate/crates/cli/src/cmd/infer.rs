//! Plaintext reference inference (float or fixed-point), with or without a
//! patch plan applied.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde_json::json;

use mpcnn_core::tensor::interp::{FixedInterp, FloatInterp};
use mpcnn_core::tensor::modelio::save_tensor;

use crate::config::FileConfig;
use crate::util::{self, print_json};

#[derive(Args)]
pub struct InferPlainArgs {
    /// Model manifest to run.
    #[arg(long)]
    pub model: PathBuf,
    /// Optional patch plan to apply to activations.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Fixed-point/compare profile (ignored with --float).
    #[arg(long)]
    pub profile: Option<String>,
    /// Input tensor file; conflicts with --input-seed.
    #[arg(long, conflicts_with = "input_seed")]
    pub input: Option<PathBuf>,
    /// Draw the input deterministically from this seed.
    #[arg(long)]
    pub input_seed: Option<u64>,
    /// Evaluate in f64 instead of the fixed-point ring.
    #[arg(long)]
    pub float: bool,
    /// Also save the output tensor here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn infer_plain(args: &InferPlainArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let model = util::load_model(&args.model)?;
    let plan = util::load_plan(args.plan.as_deref())?;
    let (input, desc) = util::input_tensor(&model, args.input.as_deref(), args.input_seed, seed)?;

    let output = if args.float {
        FloatInterp::new(&model)?.forward(&input, plan.as_ref())?
    } else {
        let profile = util::resolve_profile(args.profile.as_deref(), cfg)?;
        FixedInterp::new(&model, profile.codec())?.forward(&input, plan.as_ref())?
    };
    if let Some(path) = &args.out {
        save_tensor(path, &output)?;
    }
    print_json(&json!({
        "mode": if args.float { "float" } else { "fixed" },
        "argmax": util::argmax(&output),
        "logits": util::values(&output),
        "input": desc,
        "output_file": args.out,
    }))
}
