//! Message transports behind one blocking trait.
//!
//! Protocols are written SPMD-style: every party runs the same function and
//! branches on its role, so each `recv` knows exactly which (peer, tag,
//! layer) it expects. Delivery per directed link is FIFO; a frame that
//! doesn't match what the protocol expects is a hard error, not a reorder.
//!
//! Two implementations:
//!
//! * [`InProcNet`] — three parties as threads connected by channels; used by
//!   the test harness and the single-process runner.
//! * [`TcpNet`] — one socket per peer with a writer thread each, so two
//!   parties streaming large openings at each other cannot deadlock on full
//!   kernel buffers.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread::JoinHandle;

use sha2::{Digest, Sha256};

use crate::wire::{decode_body, encode_frame, Party, Tag};
use crate::ProtoError;

/// Blocking, FIFO-per-link message transport for one party.
pub trait Net: Send {
    fn send(&mut self, to: Party, tag: Tag, layer: u16, payload: &[u8]) -> Result<(), ProtoError>;
    fn recv(&mut self, from: Party, tag: Tag, layer: u16) -> Result<Vec<u8>, ProtoError>;
    /// Running hash over every frame this party has sent, in order.
    fn transcript(&self) -> [u8; 32];
}

fn check_expected(
    got: (Tag, u16),
    expected: (Tag, u16),
    from: Party,
) -> Result<(), ProtoError> {
    if got != expected {
        return Err(ProtoError::Unexpected {
            expected: format!("{} from {:?}", expected.0.label(), from),
            got: format!("{} (layer {})", got.0.label(), got.1),
            layer: expected.1,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// In-process mesh
// ---------------------------------------------------------------------------

type FrameMsg = (Tag, u16, Vec<u8>);

pub struct InProcNet {
    me: Party,
    tx: HashMap<Party, Sender<FrameMsg>>,
    rx: HashMap<Party, Receiver<FrameMsg>>,
    sent_hash: Sha256,
}

/// Builds the full three-party mesh. Index `i` is party `i`'s endpoint.
pub fn in_proc_mesh() -> [InProcNet; 3] {
    let mut nets: Vec<InProcNet> = Party::ALL
        .into_iter()
        .map(|p| InProcNet {
            me: p,
            tx: HashMap::new(),
            rx: HashMap::new(),
            sent_hash: Sha256::new(),
        })
        .collect();
    for a in 0..3 {
        for b in 0..3 {
            if a == b {
                continue;
            }
            let (tx, rx) = channel();
            nets[a].tx.insert(Party::from_index(b), tx);
            nets[b].rx.insert(Party::from_index(a), rx);
        }
    }
    nets.try_into().ok().expect("three endpoints")
}

impl Net for InProcNet {
    fn send(&mut self, to: Party, tag: Tag, layer: u16, payload: &[u8]) -> Result<(), ProtoError> {
        debug_assert_ne!(to, self.me);
        self.sent_hash.update(encode_frame(tag, layer, payload));
        self.tx
            .get(&to)
            .expect("mesh is complete")
            .send((tag, layer, payload.to_vec()))
            .map_err(|_| ProtoError::Disconnected(to))
    }

    fn recv(&mut self, from: Party, tag: Tag, layer: u16) -> Result<Vec<u8>, ProtoError> {
        let (got_tag, got_layer, payload) = self
            .rx
            .get(&from)
            .expect("mesh is complete")
            .recv()
            .map_err(|_| ProtoError::Disconnected(from))?;
        check_expected((got_tag, got_layer), (tag, layer), from)?;
        Ok(payload)
    }

    fn transcript(&self) -> [u8; 32] {
        self.sent_hash.clone().finalize().into()
    }
}

// ---------------------------------------------------------------------------
// TCP mesh
// ---------------------------------------------------------------------------

struct TcpPeer {
    /// Reader half, used directly by the protocol thread.
    stream: TcpStream,
    /// Writer half lives on its own thread; frames are queued here.
    outbox: Sender<Vec<u8>>,
    writer: Option<JoinHandle<()>>,
}

pub struct TcpNet {
    me: Party,
    peers: HashMap<Party, TcpPeer>,
    sent_hash: Sha256,
}

impl TcpNet {
    /// Wraps already-connected sockets (one per peer). The runner owns the
    /// listen/connect choreography; this type only moves frames.
    pub fn new(me: Party, sockets: HashMap<Party, TcpStream>) -> Result<Self, ProtoError> {
        let mut peers = HashMap::new();
        for (party, stream) in sockets {
            let (tx, rx) = channel::<Vec<u8>>();
            let mut write_half = stream.try_clone()?;
            let writer = std::thread::spawn(move || {
                // Exits when the outbox sender drops or the peer goes away.
                while let Ok(frame) = rx.recv() {
                    if write_half.write_all(&frame).is_err() {
                        break;
                    }
                }
                let _ = write_half.flush();
            });
            peers.insert(party, TcpPeer { stream, outbox: tx, writer: Some(writer) });
        }
        Ok(TcpNet { me, peers, sent_hash: Sha256::new() })
    }
}

impl Net for TcpNet {
    fn send(&mut self, to: Party, tag: Tag, layer: u16, payload: &[u8]) -> Result<(), ProtoError> {
        debug_assert_ne!(to, self.me);
        let frame = encode_frame(tag, layer, payload);
        self.sent_hash.update(&frame);
        self.peers
            .get(&to)
            .expect("connected to all peers")
            .outbox
            .send(frame)
            .map_err(|_| ProtoError::Disconnected(to))
    }

    fn recv(&mut self, from: Party, tag: Tag, layer: u16) -> Result<Vec<u8>, ProtoError> {
        let peer = self.peers.get_mut(&from).expect("connected to all peers");
        let mut len = [0u8; 4];
        peer.stream.read_exact(&mut len)?;
        let n = u32::from_le_bytes(len) as usize;
        if n < 3 {
            return Err(ProtoError::Setup(format!("malformed frame from {from:?}")));
        }
        let mut body = vec![0u8; n];
        peer.stream.read_exact(&mut body)?;
        let (got_tag, got_layer, payload) = decode_body(&body)
            .ok_or_else(|| ProtoError::Setup(format!("unknown tag byte from {from:?}")))?;
        check_expected((got_tag, got_layer), (tag, layer), from)?;
        Ok(payload.to_vec())
    }

    fn transcript(&self) -> [u8; 32] {
        self.sent_hash.clone().finalize().into()
    }
}

impl Drop for TcpNet {
    fn drop(&mut self) {
        for peer in self.peers.values_mut() {
            // Closing the outbox lets the writer drain and exit.
            let (dead_tx, _) = channel();
            peer.outbox = dead_tx;
            if let Some(h) = peer.writer.take() {
                let _ = h.join();
            }
        }
    }
}
