//! Closed-form communication cost model.
//!
//! Every secure operation's traffic decomposes into a handful of masked
//! openings and dealer messages, so per-layer byte counts have exact
//! closed forms. This module provides them twice:
//!
//! * [`exact`] — integer bit counts per protocol invocation, used as the
//!   oracle that measured ledger bytes must equal to the bit;
//! * [`cost_bits`] / [`table`] — the analytic per-layer model over summary
//!   parameters (feature map size `h`, channels `i`/`o`, kernel `f`, ring
//!   width `ℓ`, compare window `ℓ*`, mean patch ratio `q`, field element
//!   width `logp`), including the reference table of typical values.
//!
//! A sign decision costs `r = 6·logp·ℓ + 14·ℓ` bits: six field-vector
//! messages from the two bit-decomposed compares (lengths scale with the
//! compared width) and fourteen ring-element messages from share conversion,
//! sign extraction, and the dealer's triple shares. The approximate variant
//! shrinks only the field vectors: `r* = 6·logp·ℓ* + 14·ℓ`.
//!
//! Reported megabytes are decimal (10^6 bytes). Composite table rows are
//! displayed as the sum of their components' *rounded* megabyte values,
//! which is the convention the typical values follow.

use std::str::FromStr;

use thiserror::Error;

use crate::tensor::{Layer, ModelError, ModelGraph};

#[derive(Debug, Error)]
pub enum CommError {
    #[error("unknown cost kind {0:?}")]
    UnknownKind(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("layer {0} has no cost model; transform the model first")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Summary parameters for the analytic model.
#[derive(Clone, Copy, Debug)]
pub struct CommParams {
    /// Feature map side (maps are `h × h`).
    pub h: u64,
    /// Input channels.
    pub i: u64,
    /// Output channels.
    pub o: u64,
    /// Kernel side.
    pub f: u64,
    /// Ring element bits.
    pub ell: u64,
    /// Approximate compare window bits.
    pub ell_star: u64,
    /// Mean patches-per-element ratio `(1/o)·Σ 1/|patch_i|`.
    pub q: f64,
    /// Field element bits on the wire.
    pub logp: u64,
}

impl CommParams {
    /// The reference operating point: 64×64 maps, 128→256 channels, 3×3
    /// kernels, 64-bit ring, 16-bit compare window, q = 0.1, one-byte field
    /// elements.
    pub fn typical() -> Self {
        CommParams { h: 64, i: 128, o: 256, f: 3, ell: 64, ell_star: 16, q: 0.1, logp: 8 }
    }

    pub fn validate(&self) -> Result<(), CommError> {
        if self.ell == 0 || self.ell_star == 0 || self.ell_star > self.ell {
            return Err(CommError::BadParams(format!(
                "need 0 < ell* <= ell, got ell {} ell* {}",
                self.ell, self.ell_star
            )));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(CommError::BadParams(format!("q must be in (0, 1], got {}", self.q)));
        }
        Ok(())
    }

    /// Bits per exact sign decision.
    pub fn r(&self) -> u64 {
        6 * self.logp * self.ell + 14 * self.ell
    }

    /// Bits per approximate sign decision.
    pub fn r_star(&self) -> u64 {
        6 * self.logp * self.ell_star + 14 * self.ell
    }
}

/// Exact integer bit counts per protocol invocation. These are the ledger
/// oracle: measured payload bytes must equal `bits / 8` with zero slack.
pub mod exact {
    /// Convolution via masked patch/kernel openings plus the dealer's output
    /// share: both parties open input-shaped and kernel-shaped masks, the
    /// dealer ships one output-shaped triple share.
    pub fn conv2d_bits(in_elems: u64, out_elems: u64, weight_elems: u64, ell: u64) -> u64 {
        (2 * in_elems + 2 * weight_elems + out_elems) * ell
    }

    /// Fully connected layer over `n` inputs and `v` outputs.
    pub fn linear_bits(n: u64, v: u64, ell: u64) -> u64 {
        (2 * n + 2 * n * v + v) * ell
    }

    /// `count` sign decisions compared over `width` bits.
    pub fn drelu_bits(count: u64, width: u64, ell: u64, logp: u64) -> u64 {
        count * (14 * ell + 6 * logp * width)
    }

    /// Elementwise gate multiply: two openings per element plus the dealer
    /// share.
    pub fn relu_mult_bits(count: u64, ell: u64) -> u64 {
        5 * count * ell
    }

    /// Block gate multiply: the gate-side opening is per patch, the
    /// value-side opening and dealer share are per element.
    pub fn brelu_mult_bits(elems: u64, patches: u64, ell: u64) -> u64 {
        (3 * elems + 2 * patches) * ell
    }
}

/// Rows of the analytic cost table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostKind {
    Conv2d,
    Drelu,
    ApproxDrelu,
    Pdrelu,
    ApproxPdrelu,
    Relu,
    Brelu,
    ConvDreluRelu,
    ConvApproxPdreluBrelu,
}

impl CostKind {
    pub const ALL: [CostKind; 9] = [
        CostKind::Conv2d,
        CostKind::Drelu,
        CostKind::ApproxDrelu,
        CostKind::Pdrelu,
        CostKind::ApproxPdrelu,
        CostKind::Relu,
        CostKind::Brelu,
        CostKind::ConvDreluRelu,
        CostKind::ConvApproxPdreluBrelu,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CostKind::Conv2d => "conv2d",
            CostKind::Drelu => "drelu",
            CostKind::ApproxDrelu => "approx-drelu",
            CostKind::Pdrelu => "pdrelu",
            CostKind::ApproxPdrelu => "approx-pdrelu",
            CostKind::Relu => "relu",
            CostKind::Brelu => "brelu",
            CostKind::ConvDreluRelu => "conv2d+drelu+relu",
            CostKind::ConvApproxPdreluBrelu => "conv2d+approx-pdrelu+brelu",
        }
    }

    fn components(self) -> &'static [CostKind] {
        match self {
            CostKind::ConvDreluRelu => &[CostKind::Conv2d, CostKind::Drelu, CostKind::Relu],
            CostKind::ConvApproxPdreluBrelu => {
                &[CostKind::Conv2d, CostKind::ApproxPdrelu, CostKind::Brelu]
            }
            _ => &[],
        }
    }
}

impl FromStr for CostKind {
    type Err = CommError;

    fn from_str(s: &str) -> Result<Self, CommError> {
        CostKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| CommError::UnknownKind(s.to_string()))
    }
}

/// Analytic cost of one layer of the given kind, in bits.
pub fn cost_bits(kind: CostKind, p: &CommParams) -> f64 {
    let area = (p.h * p.h) as f64;
    let (o, ell) = (p.o as f64, p.ell as f64);
    match kind {
        CostKind::Conv2d => {
            exact::conv2d_bits(p.h * p.h * p.i, p.h * p.h * p.o, p.f * p.f * p.o * p.i, p.ell)
                as f64
        }
        CostKind::Drelu => area * o * p.r() as f64,
        CostKind::ApproxDrelu => area * o * p.r_star() as f64,
        CostKind::Pdrelu => area * o * p.q * p.r() as f64,
        CostKind::ApproxPdrelu => area * o * p.q * p.r_star() as f64,
        CostKind::Relu => 5.0 * o * area * ell,
        CostKind::Brelu => (3.0 + 2.0 * p.q) * o * area * ell,
        composite => composite
            .components()
            .iter()
            .map(|&k| cost_bits(k, p))
            .sum(),
    }
}

pub fn bits_to_mb(bits: f64) -> f64 {
    bits / 8.0 / 1e6
}

/// Megabytes as displayed: rounded half away from zero.
pub fn displayed_mb(bits: f64) -> i64 {
    bits_to_mb(bits).round() as i64
}

#[derive(Clone, Debug)]
pub struct TableRow {
    pub kind: CostKind,
    pub bits: f64,
    pub mb: f64,
    /// Rounded megabytes; composites sum their components' rounded values.
    pub displayed: i64,
}

/// The full nine-row cost table at the given operating point.
pub fn table(p: &CommParams) -> Vec<TableRow> {
    CostKind::ALL
        .into_iter()
        .map(|kind| {
            let bits = cost_bits(kind, p);
            let displayed = if kind.components().is_empty() {
                displayed_mb(bits)
            } else {
                kind.components().iter().map(|&k| displayed_mb(cost_bits(k, p))).sum()
            };
            TableRow { kind, bits, mb: bits_to_mb(bits), displayed }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Whole-model accounting and the image-size study
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Dims {
    Chw(u64, u64, u64),
    Flat(u64),
}

fn walk_cost(
    model: &ModelGraph,
    layers: &[Layer],
    mut dims: Dims,
    ell: u64,
    logp: u64,
    relu_bits: &mut u64,
    total_bits: &mut u64,
) -> Result<Dims, CommError> {
    for layer in layers {
        match layer {
            Layer::Conv2d { weight, stride, padding, .. } => {
                let Dims::Chw(c, h, w) = dims else {
                    return Err(CommError::BadParams("conv over flat input".into()));
                };
                let ws = model.weight(weight)?.shape().to_vec();
                let (o, kh, kw) = (ws[0] as u64, ws[2] as u64, ws[3] as u64);
                let (oh, ow) = match padding {
                    crate::tensor::Padding::Same => {
                        (h.div_ceil(*stride as u64), w.div_ceil(*stride as u64))
                    }
                    crate::tensor::Padding::Valid => (
                        (h - kh) / *stride as u64 + 1,
                        (w - kw) / *stride as u64 + 1,
                    ),
                };
                *total_bits += exact::conv2d_bits(c * h * w, o * oh * ow, kh * kw * o * c, ell);
                dims = Dims::Chw(o, oh, ow);
            }
            Layer::Linear { weight, .. } => {
                let n = match dims {
                    Dims::Flat(n) => n,
                    Dims::Chw(c, h, w) => c * h * w,
                };
                let v = model.weight(weight)?.shape()[0] as u64;
                *total_bits += exact::linear_bits(n, v, ell);
                dims = Dims::Flat(v);
            }
            Layer::Relu => {
                let elems = match dims {
                    Dims::Chw(c, h, w) => c * h * w,
                    Dims::Flat(n) => n,
                };
                let bits = exact::drelu_bits(elems, ell, ell, logp)
                    + exact::relu_mult_bits(elems, ell);
                *relu_bits += bits;
                *total_bits += bits;
            }
            Layer::AvgPool { k, stride } => {
                let Dims::Chw(c, h, w) = dims else {
                    return Err(CommError::BadParams("pool over flat input".into()));
                };
                let (k, s) = (*k as u64, *stride as u64);
                dims = Dims::Chw(c, (h - k) / s + 1, (w - k) / s + 1);
            }
            Layer::Flatten => {
                let n = match dims {
                    Dims::Chw(c, h, w) => c * h * w,
                    Dims::Flat(n) => n,
                };
                dims = Dims::Flat(n);
            }
            Layer::Residual { body } => {
                dims = walk_cost(model, body, dims, ell, logp, relu_bits, total_bits)?;
            }
            Layer::Relu6 | Layer::MaxPool { .. } => {
                return Err(CommError::Unsupported(layer.kind_name().to_string()));
            }
        }
    }
    Ok(dims)
}

/// Fraction of a model's traffic spent on sign decisions and gating, with
/// the input scaled to `image_size × image_size` (channel count kept). The
/// linear head is treated as adapting to the scaled flatten width. Models
/// with no activation cost return 0.
pub fn relu_cost_fraction(model: &ModelGraph, image_size: u32) -> Result<f64, CommError> {
    let (relu, total) = model_cost_split(model, image_size)?;
    if total == 0 {
        return Ok(0.0);
    }
    Ok(relu as f64 / total as f64)
}

/// `(activation bits, total bits)` for the scaled model.
pub fn model_cost_split(model: &ModelGraph, image_size: u32) -> Result<(u64, u64), CommError> {
    let (c, _, _) = model.input_shape;
    let mut relu_bits = 0;
    let mut total_bits = 0;
    walk_cost(
        model,
        &model.layers,
        Dims::Chw(c as u64, image_size as u64, image_size as u64),
        64,
        8,
        &mut relu_bits,
        &mut total_bits,
    )?;
    Ok((relu_bits, total_bits))
}

/// `(size, fraction)` sweep for the image-size study.
pub fn relu_cost_sweep(model: &ModelGraph, sizes: &[u32]) -> Result<Vec<(u32, f64)>, CommError> {
    sizes
        .iter()
        .map(|&s| Ok((s, relu_cost_fraction(model, s)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::modelio::generate;
    use crate::tensor::Padding;
    use ndarray::{ArrayD, IxDyn};
    use std::collections::BTreeMap;

    #[test]
    fn sign_decision_bit_rates() {
        let p = CommParams::typical();
        assert_eq!(p.r(), 3968);
        assert_eq!(p.r_star(), 1664);
        assert_eq!(exact::drelu_bits(1, 64, 64, 8), 3968);
        assert_eq!(exact::drelu_bits(1, 16, 64, 8), 1664);
        p.validate().unwrap();
        assert!(CommParams { ell_star: 128, ..p }.validate().is_err());
        assert!(CommParams { q: 0.0, ..p }.validate().is_err());
    }

    #[test]
    fn typical_table_reproduces_displayed_values() {
        let rows = table(&CommParams::typical());
        let displayed: Vec<i64> = rows.iter().map(|r| r.displayed).collect();
        assert_eq!(displayed, vec![21, 520, 218, 52, 22, 42, 27, 583, 70]);
        // The exact-rate composite differs from the sum of rounded parts —
        // the displayed convention really is component-wise rounding.
        let full = &rows[7];
        assert_eq!(full.kind.label(), "conv2d+drelu+relu");
        assert_eq!(full.mb.round() as i64, 584);
        assert_eq!(full.displayed, 583);
    }

    #[test]
    fn analytic_conv_equals_exact_helper() {
        let p = CommParams::typical();
        let analytic = cost_bits(CostKind::Conv2d, &p);
        let manual = ((p.h * p.h) as f64 * (2 * p.i + p.o) as f64
            + 2.0 * (p.f * p.f * p.o * p.i) as f64)
            * p.ell as f64;
        assert_eq!(analytic, manual);
    }

    #[test]
    fn gate_multiply_bit_counts() {
        assert_eq!(exact::relu_mult_bits(10, 64), 3200);
        // 36 elements in 6 patches.
        assert_eq!(exact::brelu_mult_bits(36, 6, 64), (3 * 36 + 2 * 6) * 64);
        // Elementwise block gating (one patch per element) costs exactly the
        // plain gate.
        assert_eq!(exact::brelu_mult_bits(36, 36, 64), exact::relu_mult_bits(36, 64));
        assert_eq!(exact::linear_bits(64, 10, 64), (128 + 1280 + 10) * 64);
    }

    #[test]
    fn approximation_and_patching_only_ever_help() {
        for h in [8, 64] {
            for o in [16, 256] {
                for ell_star in [8, 16, 32, 64] {
                    for q in [0.01, 0.1, 1.0] {
                        let p = CommParams {
                            h,
                            o,
                            ell_star,
                            q,
                            ..CommParams::typical()
                        };
                        let d = cost_bits(CostKind::Drelu, &p);
                        let pd = cost_bits(CostKind::Pdrelu, &p);
                        let apd = cost_bits(CostKind::ApproxPdrelu, &p);
                        assert!(apd <= pd && pd <= d, "ordering at {p:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn kind_labels_round_trip() {
        for kind in CostKind::ALL {
            assert_eq!(kind.label().parse::<CostKind>().unwrap(), kind);
        }
        assert!(matches!(
            "resnet".parse::<CostKind>(),
            Err(CommError::UnknownKind(_))
        ));
    }

    #[test]
    fn activation_fraction_grows_with_image_size() {
        let m = generate("toy-cnn", 1).unwrap();
        let small = relu_cost_fraction(&m, 8).unwrap();
        let large = relu_cost_fraction(&m, 64).unwrap();
        assert!(small > 0.0 && large < 1.0);
        assert!(
            large > small,
            "kernel-mask traffic is size-independent, so activations dominate \
             at larger images: {small} vs {large}"
        );
        let sweep = relu_cost_sweep(&m, &[8, 16, 32]).unwrap();
        assert!(sweep.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn degenerate_models_pin_the_fraction() {
        let relu_only = ModelGraph {
            name: "r".into(),
            input_shape: (1, 4, 4),
            layers: vec![Layer::Relu],
            weights: BTreeMap::new(),
        };
        assert_eq!(relu_cost_fraction(&relu_only, 4).unwrap(), 1.0);
        assert_eq!(relu_cost_fraction(&relu_only, 32).unwrap(), 1.0);

        let mut linear_only = ModelGraph {
            name: "l".into(),
            input_shape: (1, 2, 2),
            layers: vec![
                Layer::Flatten,
                Layer::Linear { weight: "w".into(), bias: None },
            ],
            weights: BTreeMap::new(),
        };
        linear_only
            .weights
            .insert("w".into(), ArrayD::zeros(IxDyn(&[3, 4])));
        assert_eq!(relu_cost_fraction(&linear_only, 2).unwrap(), 0.0);
    }

    #[test]
    fn unsupported_layers_are_rejected() {
        let m = ModelGraph {
            name: "p".into(),
            input_shape: (1, 4, 4),
            layers: vec![Layer::MaxPool { k: 2, stride: 2 }],
            weights: BTreeMap::new(),
        };
        assert!(matches!(
            relu_cost_fraction(&m, 4),
            Err(CommError::Unsupported(_))
        ));
    }

    #[test]
    fn conv_cost_uses_actual_shapes() {
        // Valid padding: input 8×8, kernel 3 → output 6×6; the input-shaped
        // and output-shaped terms differ.
        let mut m = ModelGraph {
            name: "v".into(),
            input_shape: (2, 8, 8),
            layers: vec![Layer::Conv2d {
                weight: "w".into(),
                bias: None,
                stride: 1,
                padding: Padding::Valid,
            }],
            weights: BTreeMap::new(),
        };
        m.weights.insert("w".into(), ArrayD::zeros(IxDyn(&[4, 2, 3, 3])));
        let (_, total) = model_cost_split(&m, 8).unwrap();
        assert_eq!(
            total,
            exact::conv2d_bits(2 * 64, 4 * 36, 9 * 4 * 2, 64)
        );
    }
}
