//! Sign-decision budgeting: decide, per channel, how coarsely to gate its
//! activation so the whole network fits a global budget of sign decisions.
//!
//! The pipeline has three stages:
//!
//! 1. [`candidates`] enumerates, per channel, the patch shapes worth
//!    considering (a canonical size ladder, plus dropping the activation
//!    entirely);
//! 2. [`distortion`] prices each (channel, candidate) pair by measuring how
//!    much the network's pre-logits move when only that channel is changed,
//!    averaged over a sample batch — upstream activations are cached so each
//!    probe recomputes only the suffix of the network;
//! 3. [`mckp`] picks exactly one candidate per channel minimizing summed
//!    distortion under the budget — a multiple-choice knapsack solved by
//!    dynamic programming over budget columns.
//!
//! [`plans`] adds the surrounding experiment helpers: baseline plan shapes
//! (constant patch size, within-layer shuffles of an optimal plan), the
//! additive-vs-measured distortion scatter, and budget arithmetic.

pub mod candidates;
pub mod distortion;
pub mod mckp;
pub mod plans;

pub use candidates::{candidate_specs, size_set};
pub use distortion::{build_table, CandidateCost, ChannelCandidates, DistortionTable};
pub use mckp::{brute_force, selection_to_plan, solve, Selection};
pub use plans::{
    additive_distortion, additive_vs_real, constant_plan, fraction_budget, random_plan,
    real_distortion, shuffled_plan, spearman, ScatterSummary,
};

use thiserror::Error;

use crate::patch::PatchError;
use crate::tensor::ModelError;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error("distortion table needs at least one sample input")]
    NoSamples,
    #[error("distortion table is empty")]
    EmptyTable,
    #[error("budget {budget} cannot cover minimum selection weight {min_weight}")]
    Infeasible { budget: u64, min_weight: u64 },
    #[error("granularity must be at least 1")]
    BadGranularity,
    #[error("channel {channel}: plan spec is not among the table's candidates")]
    SpecMismatch { channel: u32 },
    #[error("fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv row {row}: {what}")]
    CsvFormat { row: usize, what: String },
}
