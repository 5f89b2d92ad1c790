//! Secure execution: the all-in-one three-party driver and the single-party
//! worker for real multi-process deployments.

use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;

use mpcnn_core::tensor::interp::FixedInterp;
use mpcnn_core::tensor::FTensor;
use mpcnn_proto::ledger::CommLedger;
use mpcnn_proto::runner::{run_inference_local, run_inference_tcp};
use mpcnn_proto::wire::Party;
use mpcnn_proto::ProtoError;

use crate::config::{FileConfig, Transport};
use crate::errors::Failure;
use crate::util::{self, print_json, InputDesc};

#[derive(Args)]
pub struct SecureInferArgs {
    /// Model manifest to evaluate.
    #[arg(long)]
    pub model: PathBuf,
    /// Patch plan gating the sign decisions; omit for all-elementwise.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Fixed-point/compare profile.
    #[arg(long)]
    pub profile: Option<String>,
    /// Input tensor file; conflicts with --input-seed.
    #[arg(long, conflicts_with = "input_seed")]
    pub input: Option<PathBuf>,
    /// Draw the input deterministically from this seed.
    #[arg(long)]
    pub input_seed: Option<u64>,
    /// How the three parties talk to each other.
    #[arg(long, value_enum)]
    pub transport: Option<Transport>,
    /// Socket timeout for the tcp transport, in seconds.
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Check the reconstructed output against the fixed-point interpreter
    /// and exit 4 on disagreement.
    #[arg(long)]
    pub verify: bool,
    /// Maximum absolute logit error tolerated by --verify.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Write the merged communication ledger here (.json or CSV).
    #[arg(long)]
    pub ledger_out: Option<PathBuf>,
    /// Write the run manifest here.
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

/// What both transports hand back for reporting.
struct SessionSummary {
    output: FTensor,
    drelu_count: u64,
    ledger: CommLedger,
}

pub fn secure_infer(args: &SecureInferArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let model = util::load_model(&args.model)?;
    let plan = util::load_plan(args.plan.as_deref())?;
    let profile = util::resolve_profile(args.profile.as_deref(), cfg)?;
    let (input, desc) = util::input_tensor(&model, args.input.as_deref(), args.input_seed, seed)?;
    let transport = args.transport.or(cfg.secure_infer.transport).unwrap_or(Transport::InProc);
    let timeout =
        Duration::from_secs(args.timeout_secs.or(cfg.secure_infer.timeout_secs).unwrap_or(10));

    let run = match transport {
        Transport::InProc => {
            let out = run_inference_local(&model, plan.as_ref(), &profile, &input, seed)?;
            SessionSummary {
                output: out.output,
                drelu_count: out.drelu_count,
                ledger: out.ledger,
            }
        }
        Transport::Tcp => {
            tcp_session(&model, plan.as_ref(), &profile, &input, seed, timeout)?
        }
    };

    let verified = if args.verify {
        let tolerance = args.tolerance.or(cfg.secure_infer.tolerance).unwrap_or(1.0 / 256.0);
        Some(verify_output(&model, plan.as_ref(), &profile, &input, &run.output, tolerance)?)
    } else {
        None
    };

    if let Some(path) = &args.ledger_out {
        util::write_ledger(&run.ledger, path)?;
    }
    if let Some(path) = &args.manifest_out {
        util::write_run_manifest(
            path,
            &model,
            &args.model,
            plan.as_ref(),
            args.plan.as_deref(),
            &profile,
            transport,
            seed,
            Some(&desc),
            args.ledger_out.as_deref(),
        )?;
    }

    print_json(&json!({
        "transport": transport.label(),
        "profile": profile.name,
        "seed": seed,
        "input": desc,
        "argmax": util::argmax(&run.output),
        "logits": util::values(&run.output),
        "drelu_count": run.drelu_count,
        "rounds": run.ledger.total_rounds(),
        "messages": run.ledger.total_messages(),
        "payload_bytes": run.ledger.total_payload(),
        "verified": verified,
        "ledger": args.ledger_out,
        "manifest": args.manifest_out,
    }))
}

/// Compare against the fixed-point interpreter under the same plan. With an
/// exact-compare profile the two must agree to within truncation noise; an
/// approximate profile can legitimately trip this — that is what the check
/// is for.
fn verify_output(
    model: &mpcnn_core::tensor::graph::ModelGraph,
    plan: Option<&mpcnn_core::patch::PatchPlan>,
    profile: &mpcnn_core::profile::Profile,
    input: &FTensor,
    secure: &FTensor,
    tolerance: f64,
) -> Result<serde_json::Value> {
    let plain = FixedInterp::new(model, profile.codec())?.forward(input, plan)?;
    let max_error = util::max_abs_diff(secure, &plain);
    let secure_argmax = util::argmax(secure);
    let plain_argmax = util::argmax(&plain);
    if max_error > tolerance || secure_argmax != plain_argmax {
        return Err(Failure::verification(format!(
            "secure output disagrees with the fixed-point reference: \
             max logit error {max_error:.3e} (tolerance {tolerance:.3e}), \
             argmax {secure_argmax} vs {plain_argmax}"
        )));
    }
    Ok(json!({
        "max_error": max_error,
        "tolerance": tolerance,
        "argmax_agrees": true,
    }))
}

/// Run all three parties as threads over loopback TCP. Ports are reserved by
/// binding ephemeral listeners, then released for the parties to claim; the
/// window for another process to steal one is harmless at desk scale.
fn tcp_session(
    model: &mpcnn_core::tensor::graph::ModelGraph,
    plan: Option<&mpcnn_core::patch::PatchPlan>,
    profile: &mpcnn_core::profile::Profile,
    input: &FTensor,
    seed: u64,
    timeout: Duration,
) -> Result<SessionSummary> {
    let addrs = free_addrs()?;
    let joined = std::thread::scope(|s| {
        let handles = Party::ALL.map(|party| {
            let addrs = &addrs;
            s.spawn(move || {
                let inp = (party != Party::P2).then_some(input);
                run_inference_tcp(party, addrs, model, plan, profile, inp, seed, timeout)
            })
        });
        handles.map(|h| h.join().unwrap_or(Err(ProtoError::PartyPanic)))
    });

    // Prefer the most informative abort: a handshake or transcript error
    // over the disconnects it causes in the other parties.
    if let Some(err) = pick_error(joined.iter()) {
        return Err(err.into());
    }
    let [p0, p1, dealer] = joined.map(|r| r.expect("errors handled above"));

    if p0.output_ring != p1.output_ring {
        return Err(Failure::verification(
            "evaluators reconstructed different outputs".to_string(),
        ));
    }
    let mut ledger = p0.ledger.clone();
    ledger.merge(&p1.ledger);
    ledger.merge(&dealer.ledger);
    Ok(SessionSummary {
        output: p0.output.ok_or_else(|| Failure::verification("evaluator produced no output"))?,
        drelu_count: p0.drelu_count,
        ledger,
    })
}

fn pick_error<'a, T: 'a>(
    results: impl Iterator<Item = &'a Result<T, ProtoError>>,
) -> Option<ProtoError> {
    let mut fallback = None;
    for r in results {
        match r {
            Ok(_) => {}
            Err(ProtoError::Disconnected(p)) => {
                fallback.get_or_insert(ProtoError::Disconnected(*p));
            }
            Err(e) => return Some(clone_proto_error(e)),
        }
    }
    fallback
}

/// ProtoError is not Clone (it can wrap io::Error), so rebuild the variants
/// we surface; anything exotic degrades to a Setup message.
fn clone_proto_error(e: &ProtoError) -> ProtoError {
    match e {
        ProtoError::Disconnected(p) => ProtoError::Disconnected(*p),
        ProtoError::PartyPanic => ProtoError::PartyPanic,
        ProtoError::Handshake { peer, ours, theirs } => ProtoError::Handshake {
            peer: *peer,
            ours: ours.clone(),
            theirs: theirs.clone(),
        },
        ProtoError::Unexpected { expected, got, layer } => ProtoError::Unexpected {
            expected: expected.clone(),
            got: got.clone(),
            layer: *layer,
        },
        other => ProtoError::Setup(other.to_string()),
    }
}

fn free_addrs() -> Result<[String; 3]> {
    let hold: Vec<TcpListener> = (0..3)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<std::io::Result<_>>()
        .context("reserving loopback ports")?;
    let addrs: Vec<String> = hold
        .iter()
        .map(|l| Ok(l.local_addr()?.to_string()))
        .collect::<std::io::Result<_>>()
        .context("reading reserved ports")?;
    Ok(addrs.try_into().expect("three listeners"))
}

#[derive(Args)]
pub struct PartyArgs {
    /// Which party this process plays: 0 and 1 evaluate, 2 deals.
    #[arg(long)]
    pub role: u8,
    /// Listen addresses for parties 0,1,2 — same list on every process.
    #[arg(long, value_delimiter = ',', value_name = "HOST:PORT,HOST:PORT,HOST:PORT")]
    pub addrs: Vec<String>,
    /// Model manifest (all parties load the same model).
    #[arg(long)]
    pub model: PathBuf,
    /// Patch plan gating the sign decisions.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Fixed-point/compare profile.
    #[arg(long)]
    pub profile: Option<String>,
    /// Input tensor file (evaluators only); conflicts with --input-seed.
    #[arg(long, conflicts_with = "input_seed")]
    pub input: Option<PathBuf>,
    /// Draw the input deterministically from this seed (evaluators only).
    #[arg(long)]
    pub input_seed: Option<u64>,
    /// Socket timeout in seconds.
    #[arg(long, default_value_t = 10)]
    pub timeout_secs: u64,
    /// Write this party's own communication ledger here (.json or CSV).
    #[arg(long)]
    pub ledger_out: Option<PathBuf>,
    /// Write the run manifest here.
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

/// One party of a three-process deployment. All processes must agree on
/// model, plan, profile and seed; the handshake aborts the session if the
/// joint fingerprints differ.
pub fn party(args: &PartyArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    if args.role > 2 {
        return Err(Failure::config(format!("--role must be 0, 1 or 2, got {}", args.role)));
    }
    if args.addrs.len() != 3 {
        return Err(Failure::config(format!(
            "--addrs needs exactly three host:port entries, got {}",
            args.addrs.len()
        )));
    }
    let role = Party::from_index(usize::from(args.role));
    let addrs: [String; 3] = args.addrs.clone().try_into().expect("length checked");

    let model = util::load_model(&args.model)?;
    let plan = util::load_plan(args.plan.as_deref())?;
    let profile = util::resolve_profile(args.profile.as_deref(), cfg)?;
    let input: Option<(FTensor, InputDesc)> = if role == Party::P2 {
        None
    } else {
        Some(util::input_tensor(&model, args.input.as_deref(), args.input_seed, seed)?)
    };
    let timeout = Duration::from_secs(args.timeout_secs);

    let outcome = run_inference_tcp(
        role,
        &addrs,
        &model,
        plan.as_ref(),
        &profile,
        input.as_ref().map(|(t, _)| t),
        seed,
        timeout,
    )?;

    if let Some(path) = &args.ledger_out {
        util::write_ledger(&outcome.ledger, path)?;
    }
    if let Some(path) = &args.manifest_out {
        util::write_run_manifest(
            path,
            &model,
            &args.model,
            plan.as_ref(),
            args.plan.as_deref(),
            &profile,
            Transport::Tcp,
            seed,
            input.as_ref().map(|(_, d)| d),
            args.ledger_out.as_deref(),
        )?;
    }

    print_json(&json!({
        "role": args.role,
        "argmax": outcome.output.as_ref().map(util::argmax),
        "logits": outcome.output.as_ref().map(util::values),
        "drelu_count": outcome.drelu_count,
        "messages": outcome.ledger.total_messages(),
        "payload_bytes": outcome.ledger.total_payload(),
        "input": input.as_ref().map(|(_, d)| d),
        "ledger": args.ledger_out,
        "manifest": args.manifest_out,
    }))
}
