//! Two-of-two additive sharing between the evaluating parties, with the
//! helper party acting as a deterministic dealer.
//!
//! All "fresh randomness" in the stack is drawn from seeded counter-mode
//! streams ([`Prf`]) keyed per party pair and purpose. Two parties holding
//! the same pairwise seed derive identical streams, which is what lets a
//! share that *would* be a fresh random value travel for zero bytes: one
//! side draws it, the other side draws the same thing.
//!
//! This is an engineering stand-in for a proper PRF/PRG agreed during setup,
//! not a security claim; the point of this codebase is protocol structure
//! and exact cost accounting, not hardened key management.

use std::collections::HashMap;

use ndarray::ArrayD;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ring::{FieldP, OddRing};

#[derive(Debug, Error, PartialEq)]
pub enum ShareError {
    #[error("share shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("share domains differ: {0:?} vs {1:?}")]
    DomainMismatch(Domain, Domain),
    #[error("seed hex must be 64 hex digits, got {0:?}")]
    BadSeedHex(String),
}

/// The three protocol roles. P0 and P1 evaluate on shares; P2 assists.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum PartyId {
    P0,
    P1,
    P2,
}

impl PartyId {
    pub const ALL: [PartyId; 3] = [PartyId::P0, PartyId::P1, PartyId::P2];

    pub fn index(self) -> usize {
        match self {
            PartyId::P0 => 0,
            PartyId::P1 => 1,
            PartyId::P2 => 2,
        }
    }

    /// For an evaluating party, the other evaluating party.
    pub fn peer_evaluator(self) -> PartyId {
        match self {
            PartyId::P0 => PartyId::P1,
            PartyId::P1 => PartyId::P0,
            PartyId::P2 => panic!("helper party has no evaluator peer"),
        }
    }

    /// Share multiplier used in Beaver-style reconstruction terms: exactly
    /// one evaluator contributes public constants.
    pub fn beaver_j(self) -> u64 {
        match self {
            PartyId::P0 => 0,
            PartyId::P1 => 1,
            PartyId::P2 => panic!("helper party holds no Beaver share"),
        }
    }
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p{}", self.index())
    }
}

/// Which pairwise seed a stream hangs off.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum SeedScope {
    /// Shared by P0 and P1 (masks the helper never sees).
    Evaluators,
    /// Shared by P0 and P2 (lets the dealer hand P0 shares for free).
    DealerP0,
    /// Shared by P1 and P2.
    DealerP1,
    /// Private to one party.
    Private(PartyId),
}

impl SeedScope {
    pub fn members(self) -> &'static [PartyId] {
        match self {
            SeedScope::Evaluators => &[PartyId::P0, PartyId::P1],
            SeedScope::DealerP0 => &[PartyId::P0, PartyId::P2],
            SeedScope::DealerP1 => &[PartyId::P1, PartyId::P2],
            SeedScope::Private(PartyId::P0) => &[PartyId::P0],
            SeedScope::Private(PartyId::P1) => &[PartyId::P1],
            SeedScope::Private(PartyId::P2) => &[PartyId::P2],
        }
    }

    fn label(self) -> &'static str {
        match self {
            SeedScope::Evaluators => "pair-01",
            SeedScope::DealerP0 => "pair-02",
            SeedScope::DealerP1 => "pair-12",
            SeedScope::Private(PartyId::P0) => "priv-0",
            SeedScope::Private(PartyId::P1) => "priv-1",
            SeedScope::Private(PartyId::P2) => "priv-2",
        }
    }
}

/// 32-byte master seed for a session.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PrfSeed(pub [u8; 32]);

impl PrfSeed {
    pub fn from_hex(s: &str) -> Result<Self, ShareError> {
        let bytes = hex::decode(s).map_err(|_| ShareError::BadSeedHex(s.to_string()))?;
        let arr: [u8; 32] =
            bytes.try_into().map_err(|_| ShareError::BadSeedHex(s.to_string()))?;
        Ok(PrfSeed(arr))
    }

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    /// Convenience seed for tests and toy sessions.
    pub fn from_u64(x: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"mpcnn-seed");
        h.update(x.to_le_bytes());
        PrfSeed(h.finalize().into())
    }

    fn derive(self, scope: SeedScope, purpose: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.0);
        h.update(scope.label().as_bytes());
        h.update([0x1f]);
        h.update(purpose.as_bytes());
        h.finalize().into()
    }
}

/// One deterministic stream. Both holders of the underlying seed must draw
/// the same quantities in the same order; the protocol code is written so
/// that this holds by construction.
pub struct Prf {
    rng: ChaCha20Rng,
}

impl Prf {
    fn new(seed: [u8; 32]) -> Self {
        Prf { rng: ChaCha20Rng::from_seed(seed) }
    }

    /// Stream position in 32-bit words; equal positions on both holders of a
    /// pairwise seed indicate the streams are still in lockstep.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn fill_ring(&mut self, n: usize) -> Vec<u64> {
        (0..n).map(|_| self.next_u64()).collect()
    }

    /// Uniform element of the odd ring (rejects the one non-canonical word).
    pub fn next_odd(&mut self) -> u64 {
        loop {
            let v = self.next_u64();
            if v != u64::MAX {
                return v;
            }
        }
    }

    pub fn fill_odd(&mut self, n: usize) -> Vec<u64> {
        (0..n).map(|_| self.next_odd()).collect()
    }

    pub fn next_bit(&mut self) -> u8 {
        (self.next_u64() & 1) as u8
    }

    /// Uniform field element via rejection sampling on bytes.
    pub fn next_field(&mut self, field: FieldP) -> u8 {
        let p = field.p as u16;
        let bound = (256 / p) * p; // largest multiple of p in a byte
        loop {
            let mut byte = [0u8; 1];
            self.rng.fill_bytes(&mut byte);
            if (byte[0] as u16) < bound {
                return (byte[0] as u16 % p) as u8;
            }
        }
    }

    pub fn fill_field(&mut self, field: FieldP, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.next_field(field)).collect()
    }

    /// Uniform nonzero field element (multiplicative mask).
    pub fn next_field_nonzero(&mut self, field: FieldP) -> u8 {
        loop {
            let v = self.next_field(field);
            if v != 0 {
                return v;
            }
        }
    }

    /// Uniform integer below `n`.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let bound = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < bound {
                return v % n;
            }
        }
    }

    /// Fisher–Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<u32> {
        let mut perm: Vec<u32> = (0..n as u32).collect();
        for i in (1..n).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            perm.swap(i, j);
        }
        perm
    }
}

/// All streams one party can see, created lazily per `(scope, purpose)`.
/// Distinct purposes never share stream positions because each purpose is a
/// separately keyed stream.
pub struct SeedBook {
    master: PrfSeed,
    party: Option<PartyId>,
    channels: HashMap<(SeedScope, String), Prf>,
}

impl SeedBook {
    /// Streams visible to `party` in a session keyed by `master`.
    pub fn for_party(master: PrfSeed, party: PartyId) -> Self {
        SeedBook { master, party: Some(party), channels: HashMap::new() }
    }

    /// Omniscient book for single-process tooling and tests.
    pub fn omniscient(master: PrfSeed) -> Self {
        SeedBook { master, party: None, channels: HashMap::new() }
    }

    pub fn stream(&mut self, scope: SeedScope, purpose: &str) -> &mut Prf {
        if let Some(p) = self.party {
            assert!(
                scope.members().contains(&p),
                "{p} has no access to {scope:?} streams"
            );
        }
        let master = self.master;
        self.channels
            .entry((scope, purpose.to_string()))
            .or_insert_with(|| Prf::new(master.derive(scope, purpose)))
    }
}

// ---------------------------------------------------------------------------
// Additive shares
// ---------------------------------------------------------------------------

/// Domain a share tensor lives in.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Domain {
    Ring64,
    Odd,
}

impl Domain {
    pub fn add(self, a: u64, b: u64) -> u64 {
        match self {
            Domain::Ring64 => a.wrapping_add(b),
            Domain::Odd => OddRing::new(a).add(OddRing::new(b)).value(),
        }
    }

    pub fn sub(self, a: u64, b: u64) -> u64 {
        match self {
            Domain::Ring64 => a.wrapping_sub(b),
            Domain::Odd => OddRing::new(a).sub(OddRing::new(b)).value(),
        }
    }

    pub fn uniform(self, prf: &mut Prf) -> u64 {
        match self {
            Domain::Ring64 => prf.next_u64(),
            Domain::Odd => prf.next_odd(),
        }
    }
}

/// One party's additive share of a tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveShare {
    pub domain: Domain,
    pub data: ArrayD<u64>,
}

impl AdditiveShare {
    pub fn zeros_like(domain: Domain, shape: &[usize]) -> Self {
        AdditiveShare { domain, data: ArrayD::zeros(shape) }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Splits a tensor into two uniformly random additive shares.
pub fn share_tensor(
    x: &ArrayD<u64>,
    domain: Domain,
    prf: &mut Prf,
) -> (AdditiveShare, AdditiveShare) {
    let half: Vec<u64> = (0..x.len()).map(|_| domain.uniform(prf)).collect();
    let s0 = ArrayD::from_shape_vec(x.raw_dim(), half).expect("shape preserved");
    let s1 = ndarray::Zip::from(x).and(&s0).map_collect(|&v, &h| domain.sub(v, h));
    (
        AdditiveShare { domain, data: s0 },
        AdditiveShare { domain, data: s1 },
    )
}

/// Recombines two shares, checking they describe the same tensor.
pub fn reconstruct(a: &AdditiveShare, b: &AdditiveShare) -> Result<ArrayD<u64>, ShareError> {
    if a.domain != b.domain {
        return Err(ShareError::DomainMismatch(a.domain, b.domain));
    }
    if a.data.shape() != b.data.shape() {
        return Err(ShareError::ShapeMismatch(
            a.data.shape().to_vec(),
            b.data.shape().to_vec(),
        ));
    }
    Ok(ndarray::Zip::from(&a.data)
        .and(&b.data)
        .map_collect(|&x, &y| a.domain.add(x, y)))
}

// ---------------------------------------------------------------------------
// Beaver triples (dealer math)
// ---------------------------------------------------------------------------

/// One party's halves of a multiplication triple `c = mul(a, b)`.
#[derive(Clone, Debug)]
pub struct BeaverTriple {
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub c: Vec<u64>,
}

/// Dealer-side generation of elementwise triples over the main ring.
///
/// The `a`/`b`/`c0` halves come from the dealer's pairwise streams with each
/// evaluator, so in a live session only `c1` ever crosses the wire. Returns
/// `(p0_half, p1_half)`; deterministic in the streams.
pub fn gen_triples(
    n: usize,
    dealer_p0: &mut Prf,
    dealer_p1: &mut Prf,
) -> (BeaverTriple, BeaverTriple) {
    let a0 = dealer_p0.fill_ring(n);
    let b0 = dealer_p0.fill_ring(n);
    let c0 = dealer_p0.fill_ring(n);
    let a1 = dealer_p1.fill_ring(n);
    let b1 = dealer_p1.fill_ring(n);
    let c1: Vec<u64> = (0..n)
        .map(|i| {
            let a = a0[i].wrapping_add(a1[i]);
            let b = b0[i].wrapping_add(b1[i]);
            a.wrapping_mul(b).wrapping_sub(c0[i])
        })
        .collect();
    (
        BeaverTriple { a: a0, b: b0, c: c0 },
        BeaverTriple { a: a1, b: b1, c: c1 },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn tensor(vals: &[u64]) -> ArrayD<u64> {
        ArrayD::from_shape_vec(IxDyn(&[vals.len()]), vals.to_vec()).unwrap()
    }

    #[test]
    fn share_roundtrip_both_domains() {
        let mut book = SeedBook::omniscient(PrfSeed::from_u64(7));
        let x = tensor(&[0, 1, u64::MAX, 1u64 << 63, 42]);
        for domain in [Domain::Ring64, Domain::Odd] {
            let x = if domain == Domain::Odd {
                tensor(&[0, 1, u64::MAX - 1, 1u64 << 63, 42])
            } else {
                x.clone()
            };
            let prf = book.stream(SeedScope::Private(PartyId::P0), "test-share");
            let (s0, s1) = share_tensor(&x, domain, prf);
            assert_eq!(reconstruct(&s0, &s1).unwrap(), x);
        }
    }

    #[test]
    fn reconstruct_rejects_mismatches() {
        let mut book = SeedBook::omniscient(PrfSeed::from_u64(7));
        let prf = book.stream(SeedScope::Private(PartyId::P0), "test-share");
        let (a, _) = share_tensor(&tensor(&[1, 2]), Domain::Ring64, prf);
        let (_, b) = share_tensor(&tensor(&[1, 2, 3]), Domain::Ring64, prf);
        let (_, c) = share_tensor(&tensor(&[1, 2]), Domain::Odd, prf);
        assert!(matches!(reconstruct(&a, &b), Err(ShareError::ShapeMismatch(..))));
        assert!(matches!(reconstruct(&a, &c), Err(ShareError::DomainMismatch(..))));
    }

    #[test]
    fn sharing_is_deterministic_in_the_seed() {
        let x = tensor(&[3, 1, 4, 1, 5, 9, 2, 6]);
        let run = || {
            let mut book = SeedBook::omniscient(PrfSeed::from_u64(99));
            let prf = book.stream(SeedScope::Evaluators, "input");
            share_tensor(&x, Domain::Ring64, prf)
        };
        let (a1, b1) = run();
        let (a2, b2) = run();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);

        let mut other = SeedBook::omniscient(PrfSeed::from_u64(100));
        let (a3, _) = share_tensor(&x, Domain::Ring64, other.stream(SeedScope::Evaluators, "input"));
        assert_ne!(a1, a3);
    }

    #[test]
    fn purposes_are_independent_streams() {
        let mut book = SeedBook::omniscient(PrfSeed::from_u64(5));
        let a = book.stream(SeedScope::Evaluators, "alpha").next_u64();
        let b = book.stream(SeedScope::Evaluators, "beta").next_u64();
        assert_ne!(a, b);
        // Positions advance per purpose, not globally.
        assert_eq!(book.stream(SeedScope::Evaluators, "gamma").position(), 0);
    }

    #[test]
    fn pairwise_streams_agree_between_holders() {
        let master = PrfSeed::from_u64(1234);
        let mut p0 = SeedBook::for_party(master, PartyId::P0);
        let mut p2 = SeedBook::for_party(master, PartyId::P2);
        let a: Vec<u64> = p0.stream(SeedScope::DealerP0, "masks").fill_ring(16);
        let b: Vec<u64> = p2.stream(SeedScope::DealerP0, "masks").fill_ring(16);
        assert_eq!(a, b);
        assert_eq!(
            p0.stream(SeedScope::DealerP0, "masks").position(),
            p2.stream(SeedScope::DealerP0, "masks").position()
        );
    }

    #[test]
    #[should_panic(expected = "no access")]
    fn scope_access_is_enforced() {
        let mut book = SeedBook::for_party(PrfSeed::from_u64(1), PartyId::P2);
        book.stream(SeedScope::Evaluators, "masks");
    }

    #[test]
    fn triples_multiply_correctly_and_deterministically() {
        let master = PrfSeed::from_u64(77);
        let gen = || {
            let mut d0 = SeedBook::omniscient(master);
            let mut d1 = SeedBook::omniscient(master);
            let p0 = d0.stream(SeedScope::DealerP0, "triples");
            // Need two distinct streams; borrow rules force two books here.
            gen_triples(64, p0, d1.stream(SeedScope::DealerP1, "triples"))
        };
        let (t0, t1) = gen();
        for i in 0..64 {
            let a = t0.a[i].wrapping_add(t1.a[i]);
            let b = t0.b[i].wrapping_add(t1.b[i]);
            let c = t0.c[i].wrapping_add(t1.c[i]);
            assert_eq!(c, a.wrapping_mul(b));
        }
        let (u0, u1) = gen();
        assert_eq!(t0.a, u0.a);
        assert_eq!(t1.c, u1.c);
    }

    #[test]
    fn field_and_permutation_draws_are_well_formed() {
        let mut book = SeedBook::omniscient(PrfSeed::from_u64(3));
        let prf = book.stream(SeedScope::Evaluators, "pc-masks");
        let f = FieldP::new(67);
        for _ in 0..1000 {
            assert!(prf.next_field(f) < 67);
            assert_ne!(prf.next_field_nonzero(f), 0);
        }
        let mut perm = prf.permutation(64);
        perm.sort_unstable();
        assert_eq!(perm, (0..64).collect::<Vec<u32>>());
    }

    /// Coarse uniformity smoke test: top byte of a constant tensor's first
    /// share should be flat. Chi-square against 256 buckets at a 0.1%
    /// significance level; the seed is fixed so the statistic is a constant.
    #[test]
    fn share_marginals_look_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};

        let mut book = SeedBook::omniscient(PrfSeed::from_u64(2024));
        let prf = book.stream(SeedScope::Private(PartyId::P0), "uniformity");
        let x = tensor(&vec![12345u64; 1 << 17]);
        let (s0, _) = share_tensor(&x, Domain::Ring64, prf);
        let mut buckets = [0u64; 256];
        for &v in s0.data.iter() {
            buckets[(v >> 56) as usize] += 1;
        }
        let expected = (x.len() / 256) as f64;
        let stat: f64 = buckets
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        let critical = ChiSquared::new(255.0).unwrap().inverse_cdf(0.999);
        assert!(
            stat < critical,
            "chi-square {stat:.1} exceeds {critical:.1} — shares not uniform"
        );
    }
}
