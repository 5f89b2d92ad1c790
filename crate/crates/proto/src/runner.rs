//! Session orchestration: fingerprint handshake, input sharing, evaluation,
//! output reveal — plus helpers that stand up all three parties on local
//! threads or join a session over TCP.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use ndarray::{ArrayD, IxDyn};
use sha2::{Digest, Sha256};

use mpcnn_core::patch::PatchPlan;
use mpcnn_core::profile::Profile;
use mpcnn_core::tensor::modelio::model_hash;
use mpcnn_core::tensor::{FTensor, ModelGraph, RTensor};

use crate::context::SessionCtx;
use crate::engine::eval_model;
use crate::ledger::CommLedger;
use crate::seeds::draw_ring_vec;
use crate::transport::{in_proc_mesh, TcpNet};
use crate::wire::{Party, Tag, CONTROL_LAYER};
use crate::ProtoError;

/// Digest of everything a session must agree on before any share moves:
/// model weights and architecture, the activation plan, the runtime
/// profile, and the session seed.
pub fn fingerprint(
    model: &ModelGraph,
    plan: Option<&PatchPlan>,
    profile: &Profile,
    seed: u64,
) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(model_hash(model));
    match plan {
        Some(p) => h.update(p.to_json().as_bytes()),
        None => h.update(b"none"),
    }
    h.update(serde_json::to_string(profile).expect("profile serializes").as_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

/// Exchanges fingerprints with both peers and fails on any mismatch.
pub fn handshake(ctx: &mut SessionCtx, fp: [u8; 32]) -> Result<(), ProtoError> {
    ctx.layer = CONTROL_LAYER;
    for peer in ctx.party.peers() {
        ctx.send(peer, Tag::Handshake, &fp)?;
    }
    for peer in ctx.party.peers() {
        let theirs = ctx.recv(peer, Tag::Handshake)?;
        if theirs != fp {
            return Err(ProtoError::Handshake {
                peer,
                ours: hex::encode(fp),
                theirs: hex::encode(theirs),
            });
        }
    }
    Ok(())
}

/// One party's turn through a full session. Evaluators must pass the input
/// (this demo setting has both of them load it and split it over the shared
/// stream); the dealer passes `None`. Returns the reconstructed output ring
/// tensor for evaluators, `None` for the dealer.
pub fn party_session(
    ctx: &mut SessionCtx,
    model: &ModelGraph,
    plan: Option<&PatchPlan>,
    input: Option<&FTensor>,
    fp: [u8; 32],
) -> Result<Option<RTensor>, ProtoError> {
    handshake(ctx, fp)?;

    // Input shares are the first draw from the evaluators' stream, before
    // the engine's weight-sharing draws.
    let input_share = if ctx.is_dealer() {
        None
    } else {
        let input = input.ok_or_else(|| {
            ProtoError::Setup("evaluators need the input tensor".into())
        })?;
        if input.shape() != model.input_shape_dims().as_slice() {
            return Err(ProtoError::Model(
                mpcnn_core::tensor::ModelError::InputShape {
                    got: input.shape().to_vec(),
                    want: model.input_shape_dims(),
                },
            ));
        }
        let codec = ctx.profile.codec();
        let enc: Result<Vec<u64>, _> = input.iter().map(|&v| codec.encode(v)).collect();
        let enc = enc?;
        let masks = draw_ring_vec(ctx.seeds.evaluators(), enc.len());
        let share = if ctx.j() == 0 {
            masks
        } else {
            enc.iter().zip(&masks).map(|(e, m)| e.wrapping_sub(*m)).collect()
        };
        Some(ArrayD::from_shape_vec(IxDyn(input.shape()), share).expect("same shape"))
    };

    let out_share = eval_model(ctx, model, plan, input_share)?;

    // Reveal between the evaluators, off the per-layer books.
    ctx.layer = CONTROL_LAYER;
    if ctx.is_dealer() {
        return Ok(None);
    }
    let flat: Vec<u64> = out_share.iter().copied().collect();
    let peer = ctx.party.other_evaluator();
    ctx.send_ring(peer, Tag::Reveal, &flat)?;
    let theirs = ctx.recv_ring(peer, Tag::Reveal)?;
    if theirs.len() != flat.len() {
        return Err(ProtoError::Unexpected {
            expected: format!("{} revealed elements", flat.len()),
            got: format!("{}", theirs.len()),
            layer: CONTROL_LAYER,
        });
    }
    let sum: Vec<u64> =
        flat.iter().zip(&theirs).map(|(a, b)| a.wrapping_add(*b)).collect();
    Ok(Some(
        ArrayD::from_shape_vec(out_share.raw_dim(), sum).expect("same shape"),
    ))
}

/// Runs one closure per party on scoped threads over an in-process mesh.
/// If several parties fail, the first root-cause error wins (disconnects
/// that merely follow another party's exit are reported last).
pub fn run_parties<T, F>(profile: &Profile, seed: u64, f: F) -> Result<[T; 3], ProtoError>
where
    T: Send,
    F: Fn(&mut SessionCtx) -> Result<T, ProtoError> + Sync,
{
    let [n0, n1, n2] = in_proc_mesh();
    let run = |party: Party, net: crate::transport::InProcNet| {
        let mut ctx = SessionCtx::new(party, profile.clone(), seed, Box::new(net));
        f(&mut ctx)
    };
    let run = &run;
    let [r0, r1, r2] = thread::scope(|s| {
        let h0 = s.spawn(move || run(Party::P0, n0));
        let h1 = s.spawn(move || run(Party::P1, n1));
        let h2 = s.spawn(move || run(Party::P2, n2));
        [h0, h1, h2].map(|h| h.join().unwrap_or(Err(ProtoError::PartyPanic)))
    });
    let mut results = [None, None, None];
    let mut disconnect = None;
    for (i, r) in [r0, r1, r2].into_iter().enumerate() {
        match r {
            Ok(v) => results[i] = Some(v),
            Err(e @ ProtoError::Disconnected(_)) => disconnect = Some(e),
            Err(e) => return Err(e),
        }
    }
    if let Some(e) = disconnect {
        return Err(e);
    }
    Ok(results.map(|r| r.expect("all parties succeeded")))
}

/// Everything a local three-party run produces.
pub struct RunOutput {
    /// Decoded output (fixed-point interpretation of the revealed ring).
    pub output: FTensor,
    /// Revealed output over the ring.
    pub output_ring: RTensor,
    /// All parties' traffic combined; rounds are the per-layer maximum.
    pub ledger: CommLedger,
    /// Sign decisions executed (identical on every party).
    pub drelu_count: u64,
    /// Total communication waves over all layers.
    pub rounds: u32,
}

/// Runs the full protocol on local threads and reconstructs the output.
pub fn run_inference_local(
    model: &ModelGraph,
    plan: Option<&PatchPlan>,
    profile: &Profile,
    input: &FTensor,
    seed: u64,
) -> Result<RunOutput, ProtoError> {
    let fp = fingerprint(model, plan, profile, seed);
    let results = run_parties(profile, seed, |ctx| {
        let input = if ctx.is_dealer() { None } else { Some(input) };
        let out = party_session(ctx, model, plan, input, fp)?;
        Ok((out, ctx.ledger.clone(), ctx.drelu_count))
    })?;

    let [(out0, l0, d0), (out1, l1, d1), (_, l2, d2)] = results;
    let out0 = out0.expect("evaluator output");
    let out1 = out1.expect("evaluator output");
    debug_assert_eq!(out0, out1, "evaluators reconstruct the same output");
    debug_assert!(d0 == d1 && d1 == d2, "sign decisions counted identically");

    let mut ledger = l0;
    ledger.merge(&l1);
    ledger.merge(&l2);
    let rounds = ledger.total_rounds();
    let codec = profile.codec();
    Ok(RunOutput {
        output: out0.mapv(|v| codec.decode(v)),
        output_ring: out0,
        ledger,
        drelu_count: d0,
        rounds,
    })
}

/// One party's view of a TCP run.
pub struct PartyOutcome {
    /// Reconstructed output (evaluators only).
    pub output: Option<FTensor>,
    pub output_ring: Option<RTensor>,
    /// This party's own traffic ledger (unmerged).
    pub ledger: CommLedger,
    pub drelu_count: u64,
}

fn connect_retry(addr: &str, deadline: Instant) -> Result<TcpStream, ProtoError> {
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(ProtoError::Io(e));
                }
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

/// Accept with a deadline: the listener runs non-blocking and we poll, so a
/// peer that never dials cannot park this party in `accept` forever.
fn accept_retry(listener: &TcpListener, deadline: Instant) -> Result<TcpStream, ProtoError> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((s, _)) => {
                // Accepted sockets are blocking on the platforms we target,
                // but pin it down rather than rely on inheritance rules.
                s.set_nonblocking(false)?;
                return Ok(s);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(ProtoError::Setup(
                        "timed out waiting for peers to connect".to_string(),
                    ));
                }
                thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(ProtoError::Io(e)),
        }
    }
}

/// Builds the socket mesh for one party: higher-indexed parties dial the
/// listeners of lower-indexed ones and announce themselves with one hello
/// byte. `addrs[i]` is party `i`'s listen address.
pub fn connect_mesh(
    me: Party,
    addrs: &[String; 3],
    timeout: Duration,
) -> Result<HashMap<Party, TcpStream>, ProtoError> {
    let deadline = Instant::now() + timeout;
    let accepts = me.peers().iter().filter(|p| p.index() > me.index()).count();
    let listener = if accepts > 0 {
        let l = TcpListener::bind(addrs[me.index()].as_str())?;
        Some(l)
    } else {
        None
    };

    let mut sockets = HashMap::new();
    for peer in me.peers() {
        if peer.index() < me.index() {
            let mut s = connect_retry(addrs[peer.index()].as_str(), deadline)?;
            s.write_all(&[me.index() as u8])?;
            sockets.insert(peer, s);
        }
    }
    if let Some(listener) = listener {
        for _ in 0..accepts {
            let mut s = accept_retry(&listener, deadline)?;
            // Bound the hello too: a connected-but-silent peer must not
            // stall setup past the deadline.
            s.set_read_timeout(Some(timeout))?;
            let mut hello = [0u8; 1];
            s.read_exact(&mut hello)?;
            if hello[0] as usize > 2 || hello[0] as usize <= me.index() {
                return Err(ProtoError::Setup(format!(
                    "unexpected hello byte {}",
                    hello[0]
                )));
            }
            sockets.insert(Party::from_index(hello[0] as usize), s);
        }
    }
    // One slow or wedged peer aborts the session after `timeout` rather than
    // hanging it: every in-session read is bounded by the same budget.
    for s in sockets.values() {
        s.set_read_timeout(Some(timeout))?;
    }
    Ok(sockets)
}

/// Joins a TCP session as `party` and runs one inference. Evaluators pass
/// the input; the dealer runs without one.
#[allow(clippy::too_many_arguments)]
pub fn run_inference_tcp(
    party: Party,
    addrs: &[String; 3],
    model: &ModelGraph,
    plan: Option<&PatchPlan>,
    profile: &Profile,
    input: Option<&FTensor>,
    seed: u64,
    timeout: Duration,
) -> Result<PartyOutcome, ProtoError> {
    let sockets = connect_mesh(party, addrs, timeout)?;
    let net = TcpNet::new(party, sockets)?;
    let mut ctx = SessionCtx::new(party, profile.clone(), seed, Box::new(net));
    let fp = fingerprint(model, plan, profile, seed);
    let out_ring = party_session(&mut ctx, model, plan, input, fp)?;
    let codec = profile.codec();
    Ok(PartyOutcome {
        output: out_ring.as_ref().map(|t| t.mapv(|v| codec.decode(v))),
        output_ring: out_ring,
        ledger: ctx.ledger.clone(),
        drelu_count: ctx.drelu_count,
    })
}
