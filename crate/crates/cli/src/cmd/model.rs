//! Model artifacts: generating toy networks and normalizing architectures
//! for secure execution.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;

use mpcnn_core::tensor::modelio::{generate, model_hash, preset_names, save_model};
use mpcnn_core::tensor::transform::transform_model;

use crate::errors::Failure;
use crate::util::{self, print_json};

#[derive(Args)]
pub struct GenModelArgs {
    /// Architecture to generate (see the error message for the list).
    #[arg(long)]
    pub preset: String,
    /// Directory to write manifest.json and the weight blobs into.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn gen_model(args: &GenModelArgs, seed: u64) -> Result<()> {
    let model = generate(&args.preset, seed).map_err(|e| {
        Failure::config(format!("{e}; known presets: {}", preset_names().join(", ")))
    })?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let manifest = save_model(&model, &args.out)?;
    let (c, h, w) = model.input_shape;
    print_json(&json!({
        "preset": args.preset,
        "manifest": manifest,
        "model_hash": hex::encode(model_hash(&model)),
        "layers": model.layers.len(),
        "input_shape": [c, h, w],
        "seed": seed,
    }))
}

#[derive(Args)]
pub struct TransformArgs {
    /// Model manifest to normalize.
    #[arg(long)]
    pub model: PathBuf,
    /// Directory for the rewritten model.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Rewrite activations the protocol cannot evaluate directly (maxpool,
/// clipped ReLU variants) into sign-based equivalents, preserving plaintext
/// semantics, and save the result as a new model.
pub fn transform(args: &TransformArgs) -> Result<()> {
    let model = util::load_model(&args.model)?;
    let (rewritten, report) = transform_model(&model)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let manifest = save_model(&rewritten, &args.out)?;
    print_json(&json!({
        "manifest": manifest,
        "model_hash": hex::encode(model_hash(&rewritten)),
        "noop": report.is_noop(),
        "replaced": report.replaced,
    }))
}
