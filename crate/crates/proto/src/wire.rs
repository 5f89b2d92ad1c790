//! Message framing and on-wire encodings.
//!
//! Every message is one frame:
//!
//! ```text
//! [4 bytes LE: length of the rest] [1 byte: protocol tag] [2 bytes LE: layer id] [payload]
//! ```
//!
//! The 7 framing bytes are bookkeeping, not protocol content; the ledger
//! tracks payload and framed sizes separately and the cost formulas count
//! payload only. On-wire scalars: a ring element is 8 bytes LE, a prime-field
//! element is 1 byte, a bit travels as a full ring element (sign bits are
//! shares over the ring, not plain bits).

use serde::{Deserialize, Serialize};

/// The three protocol roles. `P0` and `P1` evaluate on additive shares;
/// `P2` deals correlated randomness and assists sign extraction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash, Serialize, Deserialize)]
pub enum Party {
    P0,
    P1,
    P2,
}

impl Party {
    pub const ALL: [Party; 3] = [Party::P0, Party::P1, Party::P2];

    pub fn index(self) -> usize {
        match self {
            Party::P0 => 0,
            Party::P1 => 1,
            Party::P2 => 2,
        }
    }

    pub fn from_index(i: usize) -> Party {
        Party::ALL[i]
    }

    /// The two peers, in index order.
    pub fn peers(self) -> [Party; 2] {
        match self {
            Party::P0 => [Party::P1, Party::P2],
            Party::P1 => [Party::P0, Party::P2],
            Party::P2 => [Party::P0, Party::P1],
        }
    }

    /// Evaluator index: 0 for `P0`, 1 for `P1`; the dealer has none.
    pub fn evaluator(self) -> Option<u64> {
        match self {
            Party::P0 => Some(0),
            Party::P1 => Some(1),
            Party::P2 => None,
        }
    }

    /// The other evaluator (`P0` ↔ `P1`); panics for the dealer.
    pub fn other_evaluator(self) -> Party {
        match self {
            Party::P0 => Party::P1,
            Party::P1 => Party::P0,
            Party::P2 => panic!("dealer has no evaluator counterpart"),
        }
    }
}

/// Reserved layer id for messages that belong to no model layer
/// (handshake, final output reveal).
pub const CONTROL_LAYER: u16 = u16::MAX;

/// Which preprocessing/runtime phase a message belongs to. Offline messages
/// carry input-independent dealer material that could ship ahead of time;
/// online messages depend on the run's actual values.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Phase {
    Online,
    Offline,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Online => "online",
            Phase::Offline => "offline",
        }
    }
}

/// Protocol tag carried by every frame. Tags identify the message kind, pin
/// its phase, and key the traffic ledger.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tag {
    /// Configuration fingerprint exchange at session start.
    Handshake = 0x01,
    /// Final output share sent between evaluators.
    Reveal = 0x02,

    /// Convolution: masked input opening (evaluator ↔ evaluator).
    ConvMaskIn = 0x10,
    /// Convolution: masked kernel opening.
    ConvMaskW = 0x11,
    /// Convolution: dealer's correction share of the mask product.
    ConvC1 = 0x12,
    /// Linear layer: masked input opening.
    LinMaskIn = 0x13,
    /// Linear layer: masked weight opening.
    LinMaskW = 0x14,
    /// Linear layer: dealer's correction share.
    LinC1 = 0x15,

    /// Share conversion: masked value sent up to the dealer.
    ScMasked = 0x30,
    /// Share conversion: dealer's bit decomposition of the masked value.
    ScDealBits = 0x31,
    /// Share conversion: dealer's share of its wrap bit.
    ScDealWrap = 0x32,
    /// Share conversion: dealer's share of the masked compare bit.
    ScCompareOut = 0x33,
    /// Share conversion: compare vectors up to the dealer.
    ScCompare = 0x34,

    /// Sign extraction: dealer's share of the random odd-ring point.
    SignDealX = 0x40,
    /// Sign extraction: dealer's bit decomposition of that point.
    SignDealBits = 0x41,
    /// Sign extraction: dealer's share of the point's parity.
    SignDealLsb = 0x42,
    /// Sign extraction: product correction for the parity-combine multiply.
    SignMulC1 = 0x43,
    /// Sign extraction: masked doubled value revealed between evaluators.
    SignReveal = 0x44,
    /// Sign extraction: compare vectors up to the dealer.
    SignCompare = 0x45,
    /// Sign extraction: dealer's share of the masked compare bit.
    SignCompareOut = 0x46,
    /// Sign extraction: openings for the parity-combine multiply.
    SignMulOpen = 0x47,

    /// Activation gating: dealer's product correction share.
    GateC1 = 0x50,
    /// Activation gating: masked gate-bit and value openings.
    GateOpen = 0x51,
}

impl Tag {
    pub const ALL: [Tag; 23] = [
        Tag::Handshake,
        Tag::Reveal,
        Tag::ConvMaskIn,
        Tag::ConvMaskW,
        Tag::ConvC1,
        Tag::LinMaskIn,
        Tag::LinMaskW,
        Tag::LinC1,
        Tag::ScMasked,
        Tag::ScDealBits,
        Tag::ScDealWrap,
        Tag::ScCompareOut,
        Tag::ScCompare,
        Tag::SignDealX,
        Tag::SignDealBits,
        Tag::SignDealLsb,
        Tag::SignMulC1,
        Tag::SignReveal,
        Tag::SignCompare,
        Tag::SignCompareOut,
        Tag::SignMulOpen,
        Tag::GateC1,
        Tag::GateOpen,
    ];

    pub fn from_byte(b: u8) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn label(self) -> &'static str {
        match self {
            Tag::Handshake => "handshake",
            Tag::Reveal => "reveal",
            Tag::ConvMaskIn => "conv.mask_in",
            Tag::ConvMaskW => "conv.mask_w",
            Tag::ConvC1 => "conv.correction",
            Tag::LinMaskIn => "linear.mask_in",
            Tag::LinMaskW => "linear.mask_w",
            Tag::LinC1 => "linear.correction",
            Tag::ScMasked => "convert.masked",
            Tag::ScDealBits => "convert.deal_bits",
            Tag::ScDealWrap => "convert.deal_wrap",
            Tag::ScCompareOut => "convert.compare_out",
            Tag::ScCompare => "convert.compare",
            Tag::SignDealX => "sign.deal_x",
            Tag::SignDealBits => "sign.deal_bits",
            Tag::SignDealLsb => "sign.deal_lsb",
            Tag::SignMulC1 => "sign.mul_correction",
            Tag::SignReveal => "sign.reveal",
            Tag::SignCompare => "sign.compare",
            Tag::SignCompareOut => "sign.compare_out",
            Tag::SignMulOpen => "sign.mul_open",
            Tag::GateC1 => "gate.correction",
            Tag::GateOpen => "gate.open",
        }
    }

    /// Offline tags carry dealer material independent of the run's inputs
    /// (random points, their decompositions, mask-product corrections); the
    /// dealer could ship them before seeing any traffic. Everything the
    /// dealer derives from received values, and every evaluator message, is
    /// online.
    pub fn phase(self) -> Phase {
        match self {
            Tag::ConvC1
            | Tag::LinC1
            | Tag::SignDealX
            | Tag::SignDealBits
            | Tag::SignDealLsb
            | Tag::SignMulC1
            | Tag::GateC1 => Phase::Offline,
            _ => Phase::Online,
        }
    }
}

/// Bytes the framing adds on top of each payload.
pub const FRAME_OVERHEAD: u64 = 7;

/// Serializes one frame.
pub fn encode_frame(tag: Tag, layer: u16, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + payload.len());
    out.extend_from_slice(&(3 + payload.len() as u32).to_le_bytes());
    out.push(tag as u8);
    out.extend_from_slice(&layer.to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Splits a frame body (everything after the length word) into its parts.
pub fn decode_body(body: &[u8]) -> Option<(Tag, u16, &[u8])> {
    if body.len() < 3 {
        return None;
    }
    let tag = Tag::from_byte(body[0])?;
    let layer = u16::from_le_bytes([body[1], body[2]]);
    Some((tag, layer, &body[3..]))
}

/// Ring vector → LE bytes.
pub fn ring_to_bytes(v: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.len() * 8);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// LE bytes → ring vector. `None` if the length is not a multiple of 8.
pub fn bytes_to_ring(b: &[u8]) -> Option<Vec<u64>> {
    if !b.len().is_multiple_of(8) {
        return None;
    }
    Some(
        b.chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    )
}
