//! CNN graph description and static analysis (shape inference, activation
//! site enumeration).
//!
//! Graphs are sequential with one nesting construct: a residual block whose
//! body must preserve its input shape (`y = x + body(x)`). Layers are
//! addressed two ways:
//!
//! * a *flat layer id* assigned in depth-first preorder over the whole graph
//!   (containers included) — this is the id the communication ledger keys on;
//! * activation channels get a *global channel id*: every ReLU over a
//!   spatial tensor contributes its channel count in depth-first order, and
//!   patch plans are keyed by these ids.

use std::collections::BTreeMap;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::FTensor;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer {layer}: {msg}")]
    Shape { layer: String, msg: String },
    #[error("missing weight tensor {0:?}")]
    MissingWeight(String),
    #[error("weight {name:?} has shape {got:?}, expected {want}")]
    WeightShape { name: String, got: Vec<usize>, want: String },
    #[error("residual body must preserve shape: {0:?} -> {1:?}")]
    ResidualShape(Shape, Shape),
    #[error("model has no layers")]
    Empty,
    #[error("unsupported layer for this interpreter: {0}")]
    Unsupported(String),
    #[error("input shape {got:?} does not match model input {want:?}")]
    InputShape { got: Vec<usize>, want: Vec<usize> },
    #[error(transparent)]
    Patch(#[from] crate::patch::PatchError),
    #[error(transparent)]
    Ring(#[from] crate::ring::RingError),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero padding chosen so `out = ceil(in / stride)`.
    Same,
    /// No padding: `out = (in - k) / stride + 1`.
    Valid,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv2d {
        weight: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        bias: Option<String>,
        stride: u32,
        padding: Padding,
    },
    Linear {
        weight: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        bias: Option<String>,
    },
    Relu,
    Relu6,
    MaxPool { k: u32, stride: u32 },
    AvgPool { k: u32, stride: u32 },
    Flatten,
    Residual { body: Vec<Layer> },
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Linear { .. } => "linear",
            Layer::Relu => "relu",
            Layer::Relu6 => "relu6",
            Layer::MaxPool { .. } => "max_pool",
            Layer::AvgPool { .. } => "avg_pool",
            Layer::Flatten => "flatten",
            Layer::Residual { .. } => "residual",
        }
    }
}

/// Value shape between layers.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Shape {
    Chw(u32, u32, u32),
    Flat(u32),
}

impl Shape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Chw(c, h, w) => vec![c as usize, h as usize, w as usize],
            Shape::Flat(n) => vec![n as usize],
        }
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A ReLU over a spatial tensor: the unit of block-activation planning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReluSite {
    /// Flat layer id of the ReLU itself.
    pub layer_id: u16,
    /// First global channel id owned by this site.
    pub first_channel: u32,
    pub channels: u32,
    pub h: u32,
    pub w: u32,
}

impl ReluSite {
    pub fn channel_range(&self) -> std::ops::Range<u32> {
        self.first_channel..self.first_channel + self.channels
    }
}

#[derive(Clone, Debug)]
pub struct ModelGraph {
    pub name: String,
    /// Single-sample input shape, channels first.
    pub input_shape: (u32, u32, u32),
    pub layers: Vec<Layer>,
    /// Weight tensors; convs are `(out, in, kh, kw)`, linears `(out, in)`,
    /// biases `(out,)`. Ordered map so serialization and hashing are stable.
    pub weights: BTreeMap<String, ArrayD<f64>>,
}

impl ModelGraph {
    pub fn input_shape_dims(&self) -> Vec<usize> {
        let (c, h, w) = self.input_shape;
        vec![c as usize, h as usize, w as usize]
    }

    pub fn weight(&self, name: &str) -> Result<&FTensor, ModelError> {
        self.weights.get(name).ok_or_else(|| ModelError::MissingWeight(name.to_string()))
    }

    /// Output shape of one layer, validating weight dimensions.
    fn step_shape(&self, layer: &Layer, input: Shape) -> Result<Shape, ModelError> {
        let err = |msg: String| ModelError::Shape { layer: layer.kind_name().into(), msg };
        match layer {
            Layer::Conv2d { weight, bias, stride, padding } => {
                let Shape::Chw(c, h, w) = input else {
                    return Err(err("needs a spatial input".into()));
                };
                let wt = self.weight(weight)?;
                let ws = wt.shape();
                if ws.len() != 4 || ws[1] != c as usize {
                    return Err(ModelError::WeightShape {
                        name: weight.clone(),
                        got: ws.to_vec(),
                        want: format!("(out, {c}, kh, kw)"),
                    });
                }
                let (o, kh, kw) = (ws[0] as u32, ws[2] as u32, ws[3] as u32);
                if let Some(b) = bias {
                    let bs = self.weight(b)?.shape().to_vec();
                    if bs != [o as usize] {
                        return Err(ModelError::WeightShape {
                            name: b.clone(),
                            got: bs,
                            want: format!("({o},)"),
                        });
                    }
                }
                let s = *stride;
                if s == 0 {
                    return Err(err("stride must be positive".into()));
                }
                let (oh, ow) = match padding {
                    Padding::Same => (h.div_ceil(s), w.div_ceil(s)),
                    Padding::Valid => {
                        if kh > h || kw > w {
                            return Err(err(format!("kernel {kh}x{kw} exceeds input {h}x{w}")));
                        }
                        ((h - kh) / s + 1, (w - kw) / s + 1)
                    }
                };
                Ok(Shape::Chw(o, oh, ow))
            }
            Layer::Linear { weight, bias } => {
                let Shape::Flat(n) = input else {
                    return Err(err("needs a flattened input".into()));
                };
                let ws = self.weight(weight)?.shape().to_vec();
                if ws.len() != 2 || ws[1] != n as usize {
                    return Err(ModelError::WeightShape {
                        name: weight.clone(),
                        got: ws,
                        want: format!("(out, {n})"),
                    });
                }
                let o = ws[0] as u32;
                if let Some(b) = bias {
                    let bs = self.weight(b)?.shape().to_vec();
                    if bs != [o as usize] {
                        return Err(ModelError::WeightShape {
                            name: b.clone(),
                            got: bs,
                            want: format!("({o},)"),
                        });
                    }
                }
                Ok(Shape::Flat(o))
            }
            Layer::Relu | Layer::Relu6 => Ok(input),
            Layer::MaxPool { k, stride } | Layer::AvgPool { k, stride } => {
                let Shape::Chw(c, h, w) = input else {
                    return Err(err("needs a spatial input".into()));
                };
                if *k == 0 || *stride == 0 || *k > h || *k > w {
                    return Err(err(format!("window {k}/stride {stride} does not fit {h}x{w}")));
                }
                Ok(Shape::Chw(c, (h - k) / stride + 1, (w - k) / stride + 1))
            }
            Layer::Flatten => Ok(Shape::Flat(input.len() as u32)),
            Layer::Residual { body } => {
                let mut s = input;
                for l in body {
                    s = self.step_shape(l, s)?;
                }
                if s != input {
                    return Err(ModelError::ResidualShape(input, s));
                }
                Ok(input)
            }
        }
    }

    /// Shapes after every top-level layer. Also serves as full validation.
    pub fn infer_shapes(&self) -> Result<Vec<Shape>, ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Empty);
        }
        let (c, h, w) = self.input_shape;
        let mut shape = Shape::Chw(c, h, w);
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = self.step_shape(layer, shape)?;
            out.push(shape);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Shape, ModelError> {
        Ok(*self.infer_shapes()?.last().expect("non-empty"))
    }

    fn walk_sites(
        &self,
        layers: &[Layer],
        shape: &mut Shape,
        next_layer_id: &mut u16,
        next_channel: &mut u32,
        sites: &mut Vec<ReluSite>,
    ) -> Result<(), ModelError> {
        for layer in layers {
            let layer_id = *next_layer_id;
            *next_layer_id += 1;
            if let Layer::Residual { body } = layer {
                let input = *shape;
                self.walk_sites(body, shape, next_layer_id, next_channel, sites)?;
                *shape = input; // residual preserves shape (validated elsewhere)
                continue;
            }
            if let Layer::Relu = layer {
                if let Shape::Chw(c, h, w) = *shape {
                    sites.push(ReluSite {
                        layer_id,
                        first_channel: *next_channel,
                        channels: c,
                        h,
                        w,
                    });
                    *next_channel += c;
                }
            }
            *shape = self.step_shape(layer, *shape)?;
        }
        Ok(())
    }

    /// All plannable activation sites in depth-first order, with the global
    /// channel enumeration. ReLUs over flattened tensors are not plannable
    /// and are skipped (they always run elementwise).
    pub fn relu_sites(&self) -> Result<Vec<ReluSite>, ModelError> {
        self.infer_shapes()?; // full validation first
        let (c, h, w) = self.input_shape;
        let mut shape = Shape::Chw(c, h, w);
        let mut sites = Vec::new();
        let (mut id, mut ch) = (0u16, 0u32);
        self.walk_sites(&self.layers, &mut shape, &mut id, &mut ch, &mut sites)?;
        Ok(sites)
    }

    /// Total plannable channels.
    pub fn num_channels(&self) -> Result<u32, ModelError> {
        Ok(self.relu_sites()?.iter().map(|s| s.channels).sum())
    }

    /// Per-channel spatial dimensions, indexed by global channel id.
    pub fn channel_dims(&self) -> Result<Vec<(u32, u32)>, ModelError> {
        let mut dims = Vec::new();
        for site in self.relu_sites()? {
            dims.extend(std::iter::repeat_n((site.h, site.w), site.channels as usize));
        }
        Ok(dims)
    }

    /// Baseline sign-decision count: every plannable activation elementwise.
    pub fn baseline_drelu_count(&self) -> Result<u64, ModelError> {
        Ok(self
            .relu_sites()?
            .iter()
            .map(|s| s.channels as u64 * s.h as u64 * s.w as u64)
            .sum())
    }
}
