//! Patch geometry for block activations.
//!
//! A block-ReLU channel is partitioned into `ph × pw` rectangles; one sign
//! decision is computed per rectangle (from the patch *sum*, which shares
//! its sign with the patch mean) and applied to every element in it.
//! Rectangles at the right/bottom borders are truncated when the dimensions
//! do not divide evenly, and still count as full patches in the decision
//! budget: a channel costs `ceil(h/ph) · ceil(w/pw)` sign decisions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PatchError {
    #[error("patch {ph}x{pw} does not fit channel {h}x{w}")]
    DoesNotFit { ph: u32, pw: u32, h: u32, w: u32 },
    #[error("patch dimensions must be at least 1x1")]
    Degenerate,
    #[error("plan misses channel {0}")]
    MissingChannel(u32),
}

/// Per-channel activation treatment.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PatchSpec {
    /// Pass the channel through unchanged; costs zero sign decisions.
    Identity,
    /// Block activation with `ph × pw` rectangles. `1 × 1` is ordinary ReLU.
    Patch { ph: u32, pw: u32 },
}

impl PatchSpec {
    pub const ELEMENTWISE: PatchSpec = PatchSpec::Patch { ph: 1, pw: 1 };

    pub fn validate(self, h: u32, w: u32) -> Result<(), PatchError> {
        match self {
            PatchSpec::Identity => Ok(()),
            PatchSpec::Patch { ph, pw } => {
                if ph == 0 || pw == 0 {
                    Err(PatchError::Degenerate)
                } else if ph > h || pw > w {
                    Err(PatchError::DoesNotFit { ph, pw, h, w })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Sign decisions this spec spends on an `h × w` channel.
    pub fn drelu_count(self, h: u32, w: u32) -> u64 {
        match self {
            PatchSpec::Identity => 0,
            PatchSpec::Patch { ph, pw } => {
                (h as u64).div_ceil(ph as u64) * (w as u64).div_ceil(pw as u64)
            }
        }
    }

    pub fn is_identity(self) -> bool {
        matches!(self, PatchSpec::Identity)
    }
}

/// Rectangular partition of an `h × w` channel, truncated at the borders.
#[derive(Clone, Copy, Debug)]
pub struct PatchGrid {
    pub h: u32,
    pub w: u32,
    pub ph: u32,
    pub pw: u32,
}

impl PatchGrid {
    pub fn new(h: u32, w: u32, ph: u32, pw: u32) -> Result<Self, PatchError> {
        PatchSpec::Patch { ph, pw }.validate(h, w)?;
        Ok(PatchGrid { h, w, ph, pw })
    }

    pub fn rows(&self) -> u32 {
        self.h.div_ceil(self.ph)
    }

    pub fn cols(&self) -> u32 {
        self.w.div_ceil(self.pw)
    }

    pub fn num_patches(&self) -> usize {
        self.rows() as usize * self.cols() as usize
    }

    /// Patch index owning pixel `(i, j)`, row-major over the patch grid.
    pub fn patch_of(&self, i: u32, j: u32) -> usize {
        debug_assert!(i < self.h && j < self.w);
        (i / self.ph) as usize * self.cols() as usize + (j / self.pw) as usize
    }

    /// Iterates `(patch_index, row_range, col_range)` row-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, std::ops::Range<u32>, std::ops::Range<u32>)> + '_ {
        let (rows, cols) = (self.rows(), self.cols());
        (0..rows).flat_map(move |r| {
            (0..cols).map(move |c| {
                let r0 = r * self.ph;
                let c0 = c * self.pw;
                (
                    (r * cols + c) as usize,
                    r0..(r0 + self.ph).min(self.h),
                    c0..(c0 + self.pw).min(self.w),
                )
            })
        })
    }
}

/// A planned assignment of one [`PatchSpec`] per block-activation channel,
/// keyed by the global channel enumeration of the model.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PatchPlan {
    pub version: u32,
    /// Sign-decision budget the plan was solved under, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    pub entries: Vec<PlanEntry>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct PlanEntry {
    pub channel: u32,
    pub layer: u32,
    pub spec: PatchSpec,
}

impl PatchPlan {
    pub const VERSION: u32 = 1;

    pub fn new(entries: Vec<PlanEntry>, budget: Option<u64>) -> Self {
        PatchPlan { version: Self::VERSION, budget, entries }
    }

    /// Baseline plan: every channel stays elementwise ReLU.
    pub fn elementwise(channel_layers: &[u32]) -> Self {
        let entries = channel_layers
            .iter()
            .enumerate()
            .map(|(i, &layer)| PlanEntry {
                channel: i as u32,
                layer,
                spec: PatchSpec::ELEMENTWISE,
            })
            .collect();
        PatchPlan::new(entries, None)
    }

    pub fn spec_for(&self, channel: u32) -> Result<PatchSpec, PatchError> {
        self.entries
            .iter()
            .find(|e| e.channel == channel)
            .map(|e| e.spec)
            .ok_or(PatchError::MissingChannel(channel))
    }

    /// Total sign decisions under per-channel dimensions `dims[channel]`.
    pub fn total_weight(&self, dims: &[(u32, u32)]) -> u64 {
        self.entries
            .iter()
            .map(|e| {
                let (h, w) = dims[e.channel as usize];
                e.spec.drelu_count(h, w)
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
