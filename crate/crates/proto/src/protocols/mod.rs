//! The protocol suite, bottom-up:
//!
//! * [`pc`] — private compare: a shared bit decomposition against a public
//!   operand, the dealer learning one masked bit per element,
//! * [`convert`] — share conversion from `Z_{2^w}` to the odd ring
//!   `Z_{2^w - 1}`,
//! * [`sign`] — sign extraction over the odd ring, and the DReLU pipeline
//!   (convert, double, extract the parity),
//! * [`mul`] — mask-and-open multiplication: elementwise, gate-bit ×
//!   patch-vector, convolution, and matrix–vector flavors.
//!
//! Everything is width-generic: the exact pipeline runs at the full 64-bit
//! width, the approximate one on the share windows left by the profile's
//! compare configuration. Values of width `w < 64` still travel as full
//! 8-byte ring lanes (lanes don't bit-pack); only the bit-decomposed compare
//! vectors shrink with the window, which is exactly how the cost model
//! accounts for the approximate variant.

pub mod convert;
pub mod mul;
pub mod pc;
pub mod sign;

/// `2^w - 1`: both the low-bit mask and the odd-ring modulus for width `w`.
pub fn width_mask(w: u32) -> u64 {
    debug_assert!((1..=64).contains(&w));
    if w == 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

/// Addition in `Z_{2^w}`.
pub fn add_w(a: u64, b: u64, w: u32) -> u64 {
    a.wrapping_add(b) & width_mask(w)
}

/// Subtraction in `Z_{2^w}`.
pub fn sub_w(a: u64, b: u64, w: u32) -> u64 {
    a.wrapping_sub(b) & width_mask(w)
}

/// Carry out of `a + b` for `w`-bit operands.
pub fn wrap_w(a: u64, b: u64, w: u32) -> u64 {
    debug_assert!(a <= width_mask(w) && b <= width_mask(w));
    ((a as u128 + b as u128) >> w) as u64 & 1
}

/// Top (sign) bit of a `w`-bit value.
pub fn msb_w(a: u64, w: u32) -> u64 {
    (a >> (w - 1)) & 1
}

// Odd ring Z_{2^w - 1}; canonical values in 0..2^w-1, with the all-ones
// pattern folded to zero.

/// Canonicalizes a `w`-bit pattern into the odd ring.
pub fn odd_new(a: u64, w: u32) -> u64 {
    let m = width_mask(w);
    debug_assert!(a <= m);
    if a == m {
        0
    } else {
        a
    }
}

pub fn odd_add(a: u64, b: u64, w: u32) -> u64 {
    let m = width_mask(w) as u128;
    let s = a as u128 + b as u128;
    (if s >= m { s - m } else { s }) as u64
}

pub fn odd_sub(a: u64, b: u64, w: u32) -> u64 {
    let m = width_mask(w) as u128;
    let s = a as u128 + m - b as u128;
    (if s >= m { s - m } else { s }) as u64
}

pub fn odd_double(a: u64, w: u32) -> u64 {
    odd_add(a, a, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_arithmetic_small() {
        assert_eq!(width_mask(6), 63);
        assert_eq!(add_w(60, 10, 6), 6);
        assert_eq!(sub_w(3, 10, 6), 57);
        assert_eq!(wrap_w(60, 10, 6), 1);
        assert_eq!(wrap_w(3, 10, 6), 0);
        assert_eq!(msb_w(32, 6), 1);
        assert_eq!(msb_w(31, 6), 0);
    }

    #[test]
    fn width_arithmetic_full() {
        assert_eq!(width_mask(64), u64::MAX);
        assert_eq!(add_w(u64::MAX, 2, 64), 1);
        assert_eq!(wrap_w(u64::MAX, 1, 64), 1);
        assert_eq!(msb_w(1 << 63, 64), 1);
    }

    #[test]
    fn odd_ring_matches_core_at_full_width() {
        use mpcnn_core::ring::OddRing;
        let cases = [0u64, 1, 5, 1 << 63, u64::MAX - 1];
        for &a in &cases {
            for &b in &cases {
                let reference = OddRing::new(a).add(OddRing::new(b)).value();
                assert_eq!(odd_add(a, b, 64), reference);
                let reference = OddRing::new(a).sub(OddRing::new(b)).value();
                assert_eq!(odd_sub(a, b, 64), reference);
            }
        }
        assert_eq!(odd_new(u64::MAX, 64), 0);
        assert_eq!(odd_double(u64::MAX - 1, 64), u64::MAX - 2);
    }

    #[test]
    fn odd_ring_small_width() {
        // Modulus 63: 62 + 5 = 67 ≡ 4.
        assert_eq!(odd_add(62, 5, 6), 4);
        assert_eq!(odd_sub(0, 1, 6), 62);
        assert_eq!(odd_new(63, 6), 0);
        assert_eq!(odd_double(40, 6), 17);
    }
}
