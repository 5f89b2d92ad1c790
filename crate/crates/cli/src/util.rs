//! Shared plumbing: artifact loading, input resolution, JSON output and the
//! run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use mpcnn_core::patch::PatchPlan;
use mpcnn_core::profile::{self, Profile};
use mpcnn_core::tensor::graph::ModelGraph;
use mpcnn_core::tensor::modelio::{load_model as load_manifest, load_tensor, random_input};
use mpcnn_core::tensor::FTensor;
use mpcnn_proto::ledger::CommLedger;
use mpcnn_proto::runner::fingerprint;

use crate::config::{FileConfig, Transport};
use crate::errors::Failure;

pub fn load_model(path: &Path) -> Result<ModelGraph> {
    load_manifest(path).with_context(|| format!("loading model {}", path.display()))
}

pub fn load_plan(path: Option<&Path>) -> Result<Option<PatchPlan>> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading plan {}", path.display()))?;
    let plan = PatchPlan::from_json(&text)
        .with_context(|| format!("parsing plan {}", path.display()))?;
    Ok(Some(plan))
}

/// Flag > config file > built-in default ("exact-64bit").
pub fn resolve_profile(flag: Option<&str>, cfg: &FileConfig) -> Result<Profile> {
    let name = flag.or(cfg.profile.as_deref()).unwrap_or("exact-64bit");
    profile::preset(name).ok_or_else(|| {
        Failure::config(format!(
            "unknown profile {name:?}; available: {}",
            profile::preset_names().join(", ")
        ))
    })
}

/// Where an inference input came from; recorded in run summaries and
/// manifests so a run can be replayed exactly.
#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputDesc {
    Random { seed: u64 },
    File { path: PathBuf },
}

/// Resolve the input tensor for an inference command: an explicit tensor
/// file wins, otherwise one is drawn deterministically from the input seed
/// (falling back to the run seed).
pub fn input_tensor(
    model: &ModelGraph,
    file: Option<&Path>,
    input_seed: Option<u64>,
    run_seed: u64,
) -> Result<(FTensor, InputDesc)> {
    if let Some(path) = file {
        if input_seed.is_some() {
            return Err(Failure::config("--input and --input-seed are mutually exclusive"));
        }
        let t = load_tensor(path).with_context(|| format!("reading input {}", path.display()))?;
        return Ok((t, InputDesc::File { path: path.to_path_buf() }));
    }
    let seed = input_seed.unwrap_or(run_seed);
    Ok((random_input(&model.input_shape_dims(), seed), InputDesc::Random { seed }))
}

pub fn argmax(t: &FTensor) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in t.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub fn values(t: &FTensor) -> Vec<f64> {
    t.iter().copied().collect()
}

pub fn max_abs_diff(a: &FTensor, b: &FTensor) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Ledgers go out as CSV unless the path ends in `.json`.
pub fn write_ledger(ledger: &CommLedger, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        fs::write(path, ledger.to_json())
            .with_context(|| format!("writing ledger {}", path.display()))?;
    } else {
        let file = fs::File::create(path)
            .with_context(|| format!("writing ledger {}", path.display()))?;
        ledger.write_csv(file)?;
    }
    Ok(())
}

pub fn print_json(value: &serde_json::Value) -> Result<()> {
    out_line(&serde_json::to_string_pretty(value)?)
}

/// Print one line to stdout, treating a closed pipe (e.g. `mpcnn ... | head`)
/// as a clean early exit instead of a panic.
pub fn out_line(line: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        other => other?,
    }
    Ok(())
}

/// Everything that pins down a secure run. Two runs with identical manifests
/// produce identical transcripts and outputs, so the manifest deliberately
/// carries no timestamps or host details.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub version: u32,
    /// Joint hash of model, plan, profile and session seed — the value the
    /// parties themselves agree on during the handshake.
    pub config_hash: String,
    pub model_path: &'a Path,
    pub model_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_path: Option<&'a Path>,
    pub profile: &'a Profile,
    pub transport: &'static str,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<&'a InputDesc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ledger_out: Option<&'a Path>,
}

#[allow(clippy::too_many_arguments)]
pub fn write_run_manifest(
    path: &Path,
    model: &ModelGraph,
    model_path: &Path,
    plan: Option<&PatchPlan>,
    plan_path: Option<&Path>,
    profile: &Profile,
    transport: Transport,
    seed: u64,
    input: Option<&InputDesc>,
    ledger_out: Option<&Path>,
) -> Result<()> {
    let manifest = RunManifest {
        version: 1,
        config_hash: hex::encode(fingerprint(model, plan, profile, seed)),
        model_path,
        model_hash: hex::encode(mpcnn_core::tensor::modelio::model_hash(model)),
        plan_path,
        profile,
        transport: transport.label(),
        seed,
        input,
        ledger_out,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))
}
