//! Activation statistics behind block activations: how strongly the *sign*
//! of a pre-activation agrees across nearby positions of the same channel.
//! High agreement at short range is what makes one sign decision per patch a
//! reasonable approximation of elementwise ReLU.
//!
//! Agreement is measured over axis-aligned position pairs at a given offset
//! (horizontal and vertical), averaged across channels, positions, and
//! samples. "Sign" follows the ReLU gate convention: nonnegative counts as
//! positive.

use super::graph::{ModelError, ModelGraph};
use super::interp::FloatInterp;
use super::FTensor;
use crate::patch::PatchPlan;

/// Probability that two units of the same channel at the given axis-aligned
/// offset have the same gate sign, over `(c, h, w)` activation tensors.
///
/// Offset 0 compares units with themselves and is exactly 1. Offsets beyond
/// the spatial extent contribute no pairs; if *no* tensor yields a pair the
/// result is `None`.
pub fn sign_agreement(activations: &[FTensor], distance: u32) -> Option<f64> {
    let d = distance as usize;
    let mut pairs = 0u64;
    let mut agree = 0u64;
    for a in activations {
        debug_assert_eq!(a.ndim(), 3, "activations are (c, h, w)");
        let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let s = a[[ch, i, j]] >= 0.0;
                    if i + d < h {
                        pairs += 1;
                        agree += (s == (a[[ch, i + d, j]] >= 0.0)) as u64;
                    }
                    if d > 0 && j + d < w {
                        pairs += 1;
                        agree += (s == (a[[ch, i, j + d]] >= 0.0)) as u64;
                    }
                }
            }
        }
    }
    (pairs > 0).then(|| agree as f64 / pairs as f64)
}

/// Sign agreement of a model's plannable pre-activations over a dataset.
pub fn sign_correlation(
    model: &ModelGraph,
    inputs: &[FTensor],
    plan: Option<&PatchPlan>,
    distance: u32,
) -> Result<Option<f64>, ModelError> {
    let interp = FloatInterp::new(model)?;
    let mut acts = Vec::new();
    for x in inputs {
        acts.extend(interp.pre_activations(x, plan)?);
    }
    Ok(sign_agreement(&acts, distance))
}

/// `(distance, agreement)` curve for distances `0..=max_distance`, skipping
/// distances that yield no pairs.
pub fn sign_agreement_curve(activations: &[FTensor], max_distance: u32) -> Vec<(u32, f64)> {
    (0..=max_distance)
        .filter_map(|d| sign_agreement(activations, d).map(|p| (d, p)))
        .collect()
}
