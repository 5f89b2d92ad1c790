//! Named runtime profiles: fixed-point precision plus the comparison
//! truncation a deployment runs with.

use serde::{Deserialize, Serialize};

use crate::ring::{window_width, FieldP, FixedPointCodec, RingError, DEFAULT_PRIME};

/// How many bits the sign-decision protocol actually compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// High bits dropped from both comparison operands.
    pub ignore_msb: u32,
    /// Low bits dropped from both comparison operands.
    pub ignore_lsb: u32,
    /// Prime for the comparison field.
    pub prime: u8,
}

impl CompareConfig {
    /// Full-width, error-free comparisons.
    pub fn exact() -> Self {
        CompareConfig { ignore_msb: 0, ignore_lsb: 0, prime: DEFAULT_PRIME }
    }

    pub fn with_ignored(ignore_msb: u32, ignore_lsb: u32) -> Self {
        CompareConfig { ignore_msb, ignore_lsb, prime: DEFAULT_PRIME }
    }

    /// Compared bit count (`ℓ*` in the cost formulas).
    pub fn window(&self) -> u32 {
        window_width(self.ignore_msb, self.ignore_lsb)
    }

    pub fn is_exact(&self) -> bool {
        self.ignore_msb == 0 && self.ignore_lsb == 0
    }

    pub fn field(&self) -> FieldP {
        FieldP::new(self.prime)
    }

    pub fn validate(&self) -> Result<(), RingError> {
        self.field().check_compare_width(self.window())
    }
}

/// A deployment profile: codec precision + comparison truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub frac_bits: u32,
    pub compare: CompareConfig,
}

impl Profile {
    pub fn codec(&self) -> FixedPointCodec {
        FixedPointCodec::new(self.frac_bits).expect("profile frac_bits validated")
    }

    pub fn validate(&self) -> Result<(), RingError> {
        FixedPointCodec::new(self.frac_bits)?;
        self.compare.validate()
    }
}

/// Built-in presets.
///
/// * `exact-64bit` — full-width comparisons, 16 fractional bits.
/// * `classification-16bit` — 16 fractional bits; comparisons ignore 43 high
///   and 5 low bits, leaving a 16-bit window (tuned for bounded activations
///   of classification backbones).
/// * `segmentation-20bit` — 12 fractional bits; comparisons ignore 44 high
///   bits and keep every low bit, a 20-bit window.
pub fn preset(name: &str) -> Option<Profile> {
    let (frac_bits, compare) = match name {
        "exact-64bit" => (16, CompareConfig::exact()),
        "classification-16bit" => (16, CompareConfig::with_ignored(43, 5)),
        "segmentation-20bit" => (12, CompareConfig::with_ignored(44, 0)),
        _ => return None,
    };
    Some(Profile { name: name.to_string(), frac_bits, compare })
}

pub fn preset_names() -> &'static [&'static str] {
    &["exact-64bit", "classification-16bit", "segmentation-20bit"]
}
