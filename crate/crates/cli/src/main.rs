//! `mpcnn` — secure three-party CNN inference at desk scale.
//!
//! The pipeline, end to end:
//!
//! ```text
//! gen-model → transform → estimate → plan → secure-infer --verify
//!                          analyze-bits      infer-plain
//!                          comm-model        party (one per process)
//!                          report
//! ```
//!
//! Every subcommand prints a JSON summary on stdout (except `comm-model`,
//! which prints a table and writes CSV on request). Failures print a JSON
//! object on stderr and exit 2 (configuration), 3 (protocol abort) or
//! 4 (verification mismatch).

mod cmd;
mod config;
mod errors;
mod util;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "mpcnn",
    version,
    about = "Secure 3-party CNN inference: planning, analysis and execution"
)]
struct Cli {
    /// TOML config supplying defaults for any flag (flags win).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run seed: session randomness, and the default input/calibration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded toy model and save it as a manifest plus weights.
    GenModel(cmd::model::GenModelArgs),
    /// Rewrite unsupported activations into sign-based equivalents.
    Transform(cmd::model::TransformArgs),
    /// Build the per-channel distortion/weight candidate table.
    Estimate(cmd::plan::EstimateArgs),
    /// Allocate a sign-decision budget into a patch plan.
    Plan(cmd::plan::PlanArgs),
    /// Recommend how many compare bits can be skipped for this model.
    AnalyzeBits(cmd::bits::BitsArgs),
    /// Print the analytic per-layer traffic table for a conv block.
    CommModel(cmd::comm::CommArgs),
    /// Run the plaintext reference interpreter (float or fixed-point).
    InferPlain(cmd::infer::InferPlainArgs),
    /// Run one party of a multi-process secure session over TCP.
    Party(cmd::secure::PartyArgs),
    /// Run a full three-party secure inference (threads or loopback TCP).
    SecureInfer(cmd::secure::SecureInferArgs),
    /// Write the full analysis bundle (CSVs + summary) for a model.
    Report(cmd::report::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        let kind = errors::classify(&err);
        let payload = serde_json::json!({
            "error": format!("{err:#}"),
            "kind": kind.label(),
            "code": kind.code(),
        });
        eprintln!("{payload}");
        std::process::exit(kind.code());
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config::load(cli.config.as_deref())?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(7);
    match &cli.cmd {
        Cmd::GenModel(args) => cmd::model::gen_model(args, seed),
        Cmd::Transform(args) => cmd::model::transform(args),
        Cmd::Estimate(args) => cmd::plan::estimate(args, &cfg, seed),
        Cmd::Plan(args) => cmd::plan::plan(args, &cfg, seed),
        Cmd::AnalyzeBits(args) => cmd::bits::analyze(args, &cfg, seed),
        Cmd::CommModel(args) => cmd::comm::comm_model(args),
        Cmd::InferPlain(args) => cmd::infer::infer_plain(args, &cfg, seed),
        Cmd::Party(args) => cmd::secure::party(args, &cfg, seed),
        Cmd::SecureInfer(args) => cmd::secure::secure_infer(args, &cfg, seed),
        Cmd::Report(args) => cmd::report::report(args, &cfg, seed),
    }
}
