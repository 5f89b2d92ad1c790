//! Pairwise PRF streams.
//!
//! Each unordered pair of parties shares one deterministic stream keyed by
//! the session seed. Anything both ends of a pair can derive locally —
//! multiplication masks, share-splitting randomness, comparison blinding —
//! travels for zero bytes. The discipline that makes this sound: both ends
//! must draw from a pair's stream in exactly the same order and amount, so
//! every protocol consumes pair randomness at fixed, role-independent points.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::wire::Party;

/// One party's view of the pairwise streams (two of the three pairs).
pub struct SeedBook {
    me: Party,
    streams: [Option<ChaCha20Rng>; 3],
}

fn pair_slot(a: Party, b: Party) -> usize {
    // 0: (P0,P1), 1: (P0,P2), 2: (P1,P2)
    match (a.index().min(b.index()), a.index().max(b.index())) {
        (0, 1) => 0,
        (0, 2) => 1,
        (1, 2) => 2,
        _ => panic!("not a pair: {a:?}, {b:?}"),
    }
}

fn pair_rng(session_seed: u64, slot: usize) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"pairwise-stream");
    h.update(session_seed.to_le_bytes());
    h.update([slot as u8]);
    ChaCha20Rng::from_seed(h.finalize().into())
}

impl SeedBook {
    pub fn new(me: Party, session_seed: u64) -> Self {
        let mut streams = [None, None, None];
        for peer in me.peers() {
            let slot = pair_slot(me, peer);
            streams[slot] = Some(pair_rng(session_seed, slot));
        }
        SeedBook { me, streams }
    }

    /// The stream shared with `peer`. Panics if `peer` is this party.
    pub fn with(&mut self, peer: Party) -> &mut ChaCha20Rng {
        assert_ne!(peer, self.me, "no stream with oneself");
        self.streams[pair_slot(self.me, peer)]
            .as_mut()
            .expect("initialized in new()")
    }

    /// The evaluators' common stream; panics on the dealer.
    pub fn evaluators(&mut self) -> &mut ChaCha20Rng {
        assert_ne!(self.me, Party::P2, "dealer holds no evaluator stream");
        self.streams[0].as_mut().expect("initialized in new()")
    }
}

/// A ring element (full 64-bit draw).
pub fn draw_ring(rng: &mut ChaCha20Rng) -> u64 {
    rng.next_u64()
}

/// A vector of ring elements.
pub fn draw_ring_vec(rng: &mut ChaCha20Rng, n: usize) -> Vec<u64> {
    (0..n).map(|_| rng.next_u64()).collect()
}

/// A `width`-bit value (high bits zero).
pub fn draw_bits(rng: &mut ChaCha20Rng, width: u32) -> u64 {
    let v = rng.next_u64();
    if width == 64 {
        v
    } else {
        v & ((1u64 << width) - 1)
    }
}

/// A canonical element of the odd ring `Z_{2^width - 1}`.
pub fn draw_odd(rng: &mut ChaCha20Rng, width: u32) -> u64 {
    let m = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    let v = rng.next_u64() & m;
    if v == m {
        0
    } else {
        v
    }
}

/// A field element in `0..p`.
pub fn draw_field(rng: &mut ChaCha20Rng, p: u8) -> u8 {
    rng.gen_range(0..p)
}

/// A nonzero field element in `1..p`.
pub fn draw_nonzero_field(rng: &mut ChaCha20Rng, p: u8) -> u8 {
    rng.gen_range(1..p)
}

pub fn draw_bit(rng: &mut ChaCha20Rng) -> u64 {
    rng.next_u64() & 1
}

/// A uniform permutation of `0..n` (Fisher–Yates).
pub fn draw_perm(rng: &mut ChaCha20Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.gen_range(0..=i));
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_streams_agree_across_parties() {
        let mut a = SeedBook::new(Party::P0, 7);
        let mut b = SeedBook::new(Party::P1, 7);
        let mut c = SeedBook::new(Party::P2, 7);
        // P0 and P1 share stream 0; P1 and P2 share stream 2.
        let x: Vec<u64> = draw_ring_vec(a.with(Party::P1), 4);
        let y: Vec<u64> = draw_ring_vec(b.with(Party::P0), 4);
        assert_eq!(x, y);
        let u = draw_ring(b.with(Party::P2));
        let v = draw_ring(c.with(Party::P1));
        assert_eq!(u, v);
    }

    #[test]
    fn streams_differ_between_pairs_and_seeds() {
        let mut a = SeedBook::new(Party::P0, 7);
        let x01 = draw_ring(a.with(Party::P1));
        let x02 = draw_ring(a.with(Party::P2));
        assert_ne!(x01, x02);
        let mut a2 = SeedBook::new(Party::P0, 8);
        assert_ne!(draw_ring(a2.with(Party::P1)), x01);
    }

    #[test]
    fn draw_helpers_respect_domains() {
        let mut rng = pair_rng(1, 0);
        for _ in 0..200 {
            assert!(draw_bits(&mut rng, 6) < 64);
            assert!(draw_odd(&mut rng, 6) < 63);
            assert!(draw_field(&mut rng, 67) < 67);
            let nz = draw_nonzero_field(&mut rng, 67);
            assert!((1..67).contains(&nz));
            assert!(draw_bit(&mut rng) <= 1);
        }
        assert!(draw_odd(&mut rng, 64) < u64::MAX);
        let p = draw_perm(&mut rng, 10);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }
}
