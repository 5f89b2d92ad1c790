//! Model graphs, their plaintext interpreters (float and fixed point), model
//! serialization, architecture transforms, and activation statistics.

pub mod graph;
pub mod interp;
pub mod modelio;
pub mod stats;
pub mod transform;

pub use graph::{Layer, ModelError, ModelGraph, Padding, ReluSite, Shape};
pub use interp::conv_axis;

use ndarray::ArrayD;

/// Real-valued tensor (single sample, CHW or flat).
pub type FTensor = ArrayD<f64>;
/// Ring-valued tensor holding fixed-point encodings or shares.
pub type RTensor = ArrayD<u64>;
