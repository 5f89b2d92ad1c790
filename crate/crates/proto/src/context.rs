//! A party's view of one protocol session.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use mpcnn_core::profile::Profile;
use mpcnn_core::ring::FieldP;

use crate::ledger::CommLedger;
use crate::seeds::SeedBook;
use crate::transport::Net;
use crate::wire::{Party, Tag};
use crate::ProtoError;

/// Everything a protocol function needs: the role, the wire, the pairwise
/// randomness, the runtime profile, and the accounting state. Protocols are
/// SPMD — all three parties call the same functions with their own context —
/// so the context also carries the "current layer" used to tag messages.
pub struct SessionCtx {
    pub party: Party,
    pub profile: Profile,
    pub seeds: SeedBook,
    pub ledger: CommLedger,
    /// Flat id of the layer currently executing; tags every frame.
    pub layer: u16,
    /// Sign decisions executed so far (one per compared element).
    pub drelu_count: u64,
    /// The dealer's own randomness (random points it shares out). Seeded
    /// from the session seed so runs replay exactly; a deployment would use
    /// a fresh key here.
    pub dealer_rng: ChaCha20Rng,
    net: Box<dyn Net>,
}

impl SessionCtx {
    pub fn new(party: Party, profile: Profile, session_seed: u64, net: Box<dyn Net>) -> Self {
        let mut h = Sha256::new();
        h.update(b"dealer-private");
        h.update(session_seed.to_le_bytes());
        SessionCtx {
            party,
            seeds: SeedBook::new(party, session_seed),
            profile,
            ledger: CommLedger::new(),
            layer: 0,
            drelu_count: 0,
            dealer_rng: ChaCha20Rng::from_seed(h.finalize().into()),
            net,
        }
    }

    /// Comparison width `ℓ*` for this session's profile.
    pub fn compare_width(&self) -> u32 {
        self.profile.compare.window()
    }

    pub fn field(&self) -> FieldP {
        self.profile.compare.field()
    }

    /// Evaluator index (0 or 1); panics on the dealer. Protocol code calls
    /// this only inside evaluator branches.
    pub fn j(&self) -> u64 {
        self.party.evaluator().expect("evaluator-only branch")
    }

    pub fn is_dealer(&self) -> bool {
        self.party == Party::P2
    }

    pub fn send(&mut self, to: Party, tag: Tag, payload: &[u8]) -> Result<(), ProtoError> {
        self.ledger.note_send(self.layer, tag, payload.len() as u64);
        self.net.send(to, tag, self.layer, payload)
    }

    pub fn recv(&mut self, from: Party, tag: Tag) -> Result<Vec<u8>, ProtoError> {
        self.net.recv(from, tag, self.layer)
    }

    pub fn send_ring(&mut self, to: Party, tag: Tag, v: &[u64]) -> Result<(), ProtoError> {
        self.send(to, tag, &crate::wire::ring_to_bytes(v))
    }

    pub fn recv_ring(&mut self, from: Party, tag: Tag) -> Result<Vec<u64>, ProtoError> {
        let b = self.recv(from, tag)?;
        crate::wire::bytes_to_ring(&b).ok_or(ProtoError::Unexpected {
            expected: format!("ring vector ({})", tag.label()),
            got: format!("{} bytes", b.len()),
            layer: self.layer,
        })
    }

    /// Books one communication wave for the current layer. Every party calls
    /// this at the same protocol points, so round counts agree across roles.
    pub fn round(&mut self) {
        self.ledger.note_round(self.layer);
    }

    pub fn transcript(&self) -> [u8; 32] {
        self.net.transcript()
    }
}
