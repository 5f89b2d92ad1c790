//! Three-party secure inference runtime.
//!
//! Two parties (`P0`, `P1`) hold additive shares of every tensor and do the
//! evaluation; a third (`P2`) deals correlated randomness and assists the
//! sign-extraction protocols. The pieces:
//!
//! * [`wire`] — message framing and on-wire encodings,
//! * [`transport`] — in-process channel mesh and a TCP mesh behind one trait,
//! * [`ledger`] — per-layer, per-protocol traffic and round accounting,
//! * [`seeds`] — pairwise PRF streams that let correlated randomness travel
//!   for zero bytes,
//! * [`context`] — a party's view of one session (role, net, seeds, ledger),
//! * [`protocols`] — private compare, share conversion, sign extraction and
//!   the multiplication gates built from them,
//! * [`engine`] — the layer walk that evaluates a model graph on shares,
//! * [`runner`] — session orchestration: an in-process 3-thread harness and
//!   a TCP party runner, plus the configuration handshake.

pub mod context;
pub mod engine;
pub mod ledger;
pub mod protocols;
pub mod runner;
pub mod seeds;
pub mod transport;
pub mod wire;

use thiserror::Error;

use mpcnn_core::patch::PatchError;
use mpcnn_core::ring::RingError;
use mpcnn_core::tensor::ModelError;

/// Anything that can abort a protocol session.
#[derive(Debug, Error)]
pub enum ProtoError {
    #[error("unexpected message: expected {expected} for layer {layer}, got {got}")]
    Unexpected { expected: String, got: String, layer: u16 },
    #[error("peer {0:?} hung up mid-protocol")]
    Disconnected(crate::wire::Party),
    #[error("configuration fingerprints disagree with {peer:?}: ours {ours}, theirs {theirs}")]
    Handshake { peer: crate::wire::Party, ours: String, theirs: String },
    #[error("layer kind {0} is not evaluable by the secure engine")]
    Unsupported(String),
    #[error("session setup: {0}")]
    Setup(String),
    #[error("party thread panicked")]
    PartyPanic,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
