//! Arithmetic domains for the secure-inference stack.
//!
//! Three domains appear throughout the protocols:
//!
//! * [`Ring64`] — `Z_{2^64}`, where every tensor value lives as a two's
//!   complement fixed-point integer,
//! * [`OddRing`] — `Z_{2^64 - 1}`, entered temporarily while the sign bit is
//!   extracted (doubling a share only exposes the sign as an LSB when the
//!   modulus is odd),
//! * [`FieldP`] — a small prime field `Z_p` (default `p = 67`) holding the
//!   bit shares consumed by the comparison protocol.
//!
//! Bit vectors are always most-significant-bit first, and a prime field
//! element always serializes as one byte (so `log p = 8` in every cost
//! formula).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of the main ring in bits.
pub const RING_BITS: u32 = 64;

/// Default comparison-field prime. Must exceed the compared bit width plus
/// two so the prefix sums inside the comparison protocol cannot wrap to zero.
pub const DEFAULT_PRIME: u8 = 67;

#[derive(Debug, Error, PartialEq)]
pub enum RingError {
    #[error("value {value} does not fit fixed-point range ±2^{}", 63 - *frac_bits)]
    EncodeRange { value: f64, frac_bits: u32 },
    #[error("cannot encode a non-finite value")]
    NonFinite,
    #[error("prime {p} too small for {bits}-bit comparisons (need p > bits + 2)")]
    PrimeTooSmall { p: u8, bits: u32 },
    #[error("fractional bits must lie in 1..=62, got {0}")]
    BadFracBits(u32),
}

// ---------------------------------------------------------------------------
// Z_{2^64}
// ---------------------------------------------------------------------------

/// Element of `Z_{2^64}`. All arithmetic wraps.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ring64(pub u64);

// Named methods rather than operator overloads: every call site should read
// as modular arithmetic, not accidentally look like native integer math.
#[allow(clippy::should_implement_trait)]
impl Ring64 {
    pub fn add(self, rhs: Self) -> Self {
        Ring64(self.0.wrapping_add(rhs.0))
    }

    pub fn sub(self, rhs: Self) -> Self {
        Ring64(self.0.wrapping_sub(rhs.0))
    }

    pub fn mul(self, rhs: Self) -> Self {
        Ring64(self.0.wrapping_mul(rhs.0))
    }

    pub fn neg(self) -> Self {
        Ring64(self.0.wrapping_neg())
    }

    /// Most significant (sign) bit.
    pub fn msb(self) -> u8 {
        (self.0 >> 63) as u8
    }
}

/// Sign bit of a ring value.
pub fn msb(x: u64) -> u8 {
    (x >> 63) as u8
}

/// Plaintext derivative of ReLU: 1 for non-negative values (including zero),
/// 0 for negative ones.
pub fn drelu_plain(x: u64) -> u8 {
    1 - msb(x)
}

/// Reference truncation: arithmetic right shift of the signed value
/// (floor division by `2^f`). The two-party local truncation reconstructs to
/// within one LSB of this.
pub fn trunc_ideal(x: u64, frac_bits: u32) -> u64 {
    ((x as i64) >> frac_bits) as u64
}

// ---------------------------------------------------------------------------
// Z_{2^64 - 1}
// ---------------------------------------------------------------------------

/// Element of the odd ring `Z_{2^64 - 1}`, kept canonical in
/// `0..=u64::MAX - 1`. Note `2^64 - 1 ≡ 0`, so `u64::MAX` normalizes to zero.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct OddRing(u64);

#[allow(clippy::should_implement_trait)]
impl OddRing {
    pub const MODULUS: u128 = u64::MAX as u128;

    /// Wraps a `u64`, folding the single non-canonical pattern to zero.
    pub fn new(v: u64) -> Self {
        if v == u64::MAX {
            OddRing(0)
        } else {
            OddRing(v)
        }
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn add(self, rhs: Self) -> Self {
        let s = self.0 as u128 + rhs.0 as u128;
        OddRing(if s >= Self::MODULUS { (s - Self::MODULUS) as u64 } else { s as u64 })
    }

    pub fn sub(self, rhs: Self) -> Self {
        let s = self.0 as u128 + Self::MODULUS - rhs.0 as u128;
        OddRing(if s >= Self::MODULUS { (s - Self::MODULUS) as u64 } else { s as u64 })
    }

    pub fn mul(self, rhs: Self) -> Self {
        OddRing(((self.0 as u128 * rhs.0 as u128) % Self::MODULUS) as u64)
    }

    pub fn neg(self) -> Self {
        OddRing::default().sub(self)
    }

    pub fn double(self) -> Self {
        self.add(self)
    }

    /// Sign bit of the canonical representative (set iff value ≥ 2^63).
    pub fn msb(self) -> u8 {
        (self.0 >> 63) as u8
    }

    /// Least significant bit of the canonical representative.
    pub fn lsb(self) -> u8 {
        (self.0 & 1) as u8
    }
}

// ---------------------------------------------------------------------------
// Z_p
// ---------------------------------------------------------------------------

/// Descriptor of the prime field `Z_p` used for bit shares. Elements are
/// bare `u8` values in `0..p`; this struct carries the modulus and the
/// arithmetic.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FieldP {
    pub p: u8,
}

// Same convention as Ring64: modular ops stay spelled out.
#[allow(clippy::should_implement_trait)]
impl FieldP {
    pub fn new(p: u8) -> Self {
        FieldP { p }
    }

    /// The comparison protocol accumulates up to `bits + 1` ones into a
    /// field element and must distinguish that from zero, hence `p > bits + 2`.
    pub fn check_compare_width(self, bits: u32) -> Result<(), RingError> {
        if (self.p as u32) > bits + 2 {
            Ok(())
        } else {
            Err(RingError::PrimeTooSmall { p: self.p, bits })
        }
    }

    pub fn add(self, a: u8, b: u8) -> u8 {
        ((a as u16 + b as u16) % self.p as u16) as u8
    }

    pub fn sub(self, a: u8, b: u8) -> u8 {
        ((a as u16 + self.p as u16 - b as u16) % self.p as u16) as u8
    }

    pub fn mul(self, a: u8, b: u8) -> u8 {
        ((a as u16 * b as u16) % self.p as u16) as u8
    }

    pub fn neg(self, a: u8) -> u8 {
        self.sub(0, a)
    }

    pub fn reduce(self, a: u64) -> u8 {
        (a % self.p as u64) as u8
    }
}

// ---------------------------------------------------------------------------
// Bit decomposition
// ---------------------------------------------------------------------------

/// Decomposes the low `bits` bits of `x`, most significant first.
pub fn bit_decompose(x: u64, bits: u32) -> Vec<u8> {
    assert!((1..=64).contains(&bits), "bit width out of range");
    (0..bits).rev().map(|i| ((x >> i) & 1) as u8).collect()
}

/// Inverse of [`bit_decompose`] (MSB-first input).
pub fn recompose_bits(bits: &[u8]) -> u64 {
    assert!(bits.len() <= 64);
    bits.iter().fold(0u64, |acc, &b| {
        debug_assert!(b <= 1);
        (acc << 1) | b as u64
    })
}

/// The middle-bit window of a 64-bit value after discarding `ignore_msb`
/// high and `ignore_lsb` low bits, MSB-first. This is the view the
/// approximate comparison operates on.
pub fn bit_window(x: u64, ignore_msb: u32, ignore_lsb: u32) -> Vec<u8> {
    let width = window_width(ignore_msb, ignore_lsb);
    bit_decompose(x >> ignore_lsb, width)
}

/// Number of bits that survive the ignore configuration.
pub fn window_width(ignore_msb: u32, ignore_lsb: u32) -> u32 {
    assert!(
        ignore_msb + ignore_lsb < RING_BITS,
        "ignore bits leave no window: msb={ignore_msb} lsb={ignore_lsb}"
    );
    RING_BITS - ignore_msb - ignore_lsb
}

/// The same window as an integer (the value the comparison actually sees).
pub fn window_value(x: u64, ignore_msb: u32, ignore_lsb: u32) -> u64 {
    let width = window_width(ignore_msb, ignore_lsb);
    let shifted = x >> ignore_lsb;
    if width == 64 {
        shifted
    } else {
        shifted & ((1u64 << width) - 1)
    }
}

// ---------------------------------------------------------------------------
// Fixed point
// ---------------------------------------------------------------------------

/// Two's complement fixed-point codec over `Z_{2^64}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    pub frac_bits: u32,
}

impl FixedPointCodec {
    pub fn new(frac_bits: u32) -> Result<Self, RingError> {
        if (1..=62).contains(&frac_bits) {
            Ok(FixedPointCodec { frac_bits })
        } else {
            Err(RingError::BadFracBits(frac_bits))
        }
    }

    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Encodes a real to the ring: `round(x · 2^f)` as two's complement.
    /// Values outside `±2^(63-f)` are rejected — this also keeps the all-ones
    /// pattern (which the odd-ring conversion cannot represent) unreachable.
    pub fn encode(&self, x: f64) -> Result<u64, RingError> {
        if !x.is_finite() {
            return Err(RingError::NonFinite);
        }
        let scaled = x * self.scale();
        let limit = (1u64 << (63 - self.frac_bits)) as f64 * self.scale();
        if scaled.abs() >= limit {
            return Err(RingError::EncodeRange { value: x, frac_bits: self.frac_bits });
        }
        Ok(scaled.round() as i64 as u64)
    }

    pub fn decode(&self, v: u64) -> f64 {
        (v as i64 as f64) / self.scale()
    }
}
