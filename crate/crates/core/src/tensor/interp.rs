//! Reference interpreters for the model graph.
//!
//! Two evaluators share one traversal:
//!
//! * [`FloatInterp`] — plain `f64` semantics. This is the accuracy reference
//!   and the engine behind distortion measurement, so it supports resuming
//!   from a cached intermediate activation and tapping the pre-logits
//!   feature map (the input to the final linear layer).
//! * [`FixedInterp`] — the ideal fixed-point functionality: ring arithmetic
//!   on encoded values with scale-restoring truncation after every multiply.
//!   The secure engine must agree with this up to its share-local truncation
//!   slack, so it deliberately mirrors protocol semantics (bias added after
//!   truncation, average pooling as sum × public constant, block gates from
//!   patch-sum signs) rather than best-possible numerics.
//!
//! Both apply activation plans: each plannable channel is gated per patch by
//! the sign of the patch sum, passed through untouched (identity), or run
//! elementwise (1×1 patches).

use ndarray::{ArrayD, Axis, IxDyn, Zip};

use super::graph::{Layer, ModelError, ModelGraph, Padding, Shape};
use super::{FTensor, RTensor};
use crate::patch::{PatchGrid, PatchPlan, PatchSpec};
use crate::ring::{drelu_plain, trunc_ideal, FixedPointCodec};

/// Activations recorded during a traced forward pass.
pub struct Trace {
    /// `inputs[i]` is the tensor entering top-level layer `i`.
    pub inputs: Vec<FTensor>,
    pub output: FTensor,
    /// Input to the final linear layer (the model output if there is none).
    pub pre_logits: FTensor,
}

/// Result of resuming a forward pass from a cached activation.
pub struct Resumed {
    pub output: FTensor,
    pub pre_logits: FTensor,
}

#[derive(Clone, Copy)]
struct TopInfo {
    /// Flat (depth-first) layer id at which this top-level layer starts.
    flat_id: u16,
    /// Plannable channels consumed by everything before this layer.
    channels_before: u32,
}

struct Topo<'m> {
    model: &'m ModelGraph,
    /// Shape after each top-level layer.
    shapes: Vec<Shape>,
    tops: Vec<TopInfo>,
    pre_logits_idx: Option<usize>,
}

fn nested_count(layer: &Layer) -> u16 {
    match layer {
        Layer::Residual { body } => body.iter().map(|l| 1 + nested_count(l)).sum(),
        _ => 0,
    }
}

impl<'m> Topo<'m> {
    fn new(model: &'m ModelGraph) -> Result<Self, ModelError> {
        let shapes = model.infer_shapes()?;
        let sites = model.relu_sites()?;
        let mut tops = Vec::with_capacity(model.layers.len());
        let mut flat_id = 0u16;
        for layer in &model.layers {
            let channels_before = sites
                .iter()
                .filter(|s| s.layer_id < flat_id)
                .map(|s| s.channels)
                .sum();
            tops.push(TopInfo { flat_id, channels_before });
            flat_id += 1 + nested_count(layer);
        }
        let pre_logits_idx = model
            .layers
            .iter()
            .rposition(|l| matches!(l, Layer::Linear { .. }));
        Ok(Topo { model, shapes, tops, pre_logits_idx })
    }

    fn input_dims_at(&self, top_idx: usize) -> Vec<usize> {
        if top_idx == 0 {
            self.model.input_shape_dims()
        } else {
            self.shapes[top_idx - 1].dims()
        }
    }

    fn check_input(&self, x: &FTensor, top_idx: usize) -> Result<(), ModelError> {
        let want = self.input_dims_at(top_idx);
        if x.shape() != want.as_slice() {
            return Err(ModelError::InputShape { got: x.shape().to_vec(), want });
        }
        Ok(())
    }

    /// Top-level layer index containing the given flat layer id.
    fn top_of_flat(&self, flat_id: u16) -> usize {
        match self.tops.binary_search_by_key(&flat_id, |t| t.flat_id) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }
}

struct Ctx<'p> {
    plan: Option<&'p PatchPlan>,
    next_channel: u32,
    /// When set, inputs to every plannable (spatial) ReLU are recorded, in
    /// site order.
    capture_relu_inputs: bool,
    captured: Vec<FTensor>,
}

impl<'p> Ctx<'p> {
    fn new(plan: Option<&'p PatchPlan>, next_channel: u32) -> Self {
        Ctx { plan, next_channel, capture_relu_inputs: false, captured: Vec::new() }
    }
}

impl Ctx<'_> {
    fn spec_for_local(&mut self, local: u32) -> Result<PatchSpec, ModelError> {
        match self.plan {
            None => Ok(PatchSpec::ELEMENTWISE),
            Some(p) => Ok(p.spec_for(self.next_channel + local)?),
        }
    }
}

/// Output extent and top/left padding for one convolution axis. Shared with
/// the secure engine so plain and secure runs agree on geometry exactly.
pub fn conv_axis(h: u32, k: u32, s: u32, padding: Padding) -> (usize, i64) {
    match padding {
        Padding::Same => {
            let oh = h.div_ceil(s);
            let pad = ((oh - 1) * s + k).saturating_sub(h);
            (oh as usize, (pad / 2) as i64)
        }
        Padding::Valid => (((h - k) / s + 1) as usize, 0),
    }
}

fn chw(x: &ArrayD<impl Copy>) -> (usize, usize, usize) {
    debug_assert_eq!(x.ndim(), 3);
    (x.shape()[0], x.shape()[1], x.shape()[2])
}

// ---------------------------------------------------------------------------
// Float evaluator
// ---------------------------------------------------------------------------

pub struct FloatInterp<'m> {
    topo: Topo<'m>,
}

impl<'m> FloatInterp<'m> {
    pub fn new(model: &'m ModelGraph) -> Result<Self, ModelError> {
        Ok(FloatInterp { topo: Topo::new(model)? })
    }

    pub fn model(&self) -> &'m ModelGraph {
        self.topo.model
    }

    /// Index of the top-level layer whose input is the pre-logits tap.
    pub fn pre_logits_index(&self) -> Option<usize> {
        self.topo.pre_logits_idx
    }

    /// Top-level layer index containing a flat layer id (for resuming at an
    /// activation site that sits inside a residual body).
    pub fn top_of_flat(&self, flat_id: u16) -> usize {
        self.topo.top_of_flat(flat_id)
    }

    /// Plannable channels consumed before top-level layer `top_idx`.
    pub fn channels_before(&self, top_idx: usize) -> u32 {
        self.topo.tops[top_idx].channels_before
    }

    pub fn forward(&self, x: &FTensor, plan: Option<&PatchPlan>) -> Result<FTensor, ModelError> {
        Ok(self.resume(0, x, plan)?.output)
    }

    /// Runs the model from top-level layer `top_idx` on an activation cached
    /// from an earlier pass, returning the output and the pre-logits tap.
    pub fn resume(
        &self,
        top_idx: usize,
        x: &FTensor,
        plan: Option<&PatchPlan>,
    ) -> Result<Resumed, ModelError> {
        self.topo.check_input(x, top_idx)?;
        let mut ctx = Ctx::new(plan, self.topo.tops[top_idx].channels_before);
        let mut cur = x.clone();
        let mut pre_logits = None;
        for (i, layer) in self.topo.model.layers.iter().enumerate().skip(top_idx) {
            if Some(i) == self.topo.pre_logits_idx {
                pre_logits = Some(cur.clone());
            }
            cur = eval_float(self.topo.model, layer, cur, &mut ctx)?;
        }
        let pre_logits = pre_logits.unwrap_or_else(|| cur.clone());
        Ok(Resumed { output: cur, pre_logits })
    }

    /// Pre-activation tensors at every plannable ReLU, in site order
    /// (matching [`ModelGraph::relu_sites`]). These feed the activation
    /// statistics and the bit-width analyzer.
    pub fn pre_activations(
        &self,
        x: &FTensor,
        plan: Option<&PatchPlan>,
    ) -> Result<Vec<FTensor>, ModelError> {
        self.topo.check_input(x, 0)?;
        let mut ctx = Ctx::new(plan, 0);
        ctx.capture_relu_inputs = true;
        let mut cur = x.clone();
        for layer in &self.topo.model.layers {
            cur = eval_float(self.topo.model, layer, cur, &mut ctx)?;
        }
        Ok(ctx.captured)
    }

    /// Forward pass that additionally records the input to every top-level
    /// layer, so later passes can resume mid-model.
    pub fn forward_traced(
        &self,
        x: &FTensor,
        plan: Option<&PatchPlan>,
    ) -> Result<Trace, ModelError> {
        self.topo.check_input(x, 0)?;
        let mut ctx = Ctx::new(plan, 0);
        let mut cur = x.clone();
        let mut inputs = Vec::with_capacity(self.topo.model.layers.len());
        let mut pre_logits = None;
        for (i, layer) in self.topo.model.layers.iter().enumerate() {
            inputs.push(cur.clone());
            if Some(i) == self.topo.pre_logits_idx {
                pre_logits = Some(cur.clone());
            }
            cur = eval_float(self.topo.model, layer, cur, &mut ctx)?;
        }
        let pre_logits = pre_logits.unwrap_or_else(|| cur.clone());
        Ok(Trace { inputs, output: cur, pre_logits })
    }
}

fn eval_float(
    model: &ModelGraph,
    layer: &Layer,
    x: FTensor,
    ctx: &mut Ctx<'_>,
) -> Result<FTensor, ModelError> {
    match layer {
        Layer::Conv2d { weight, bias, stride, padding } => {
            let wt = model.weight(weight)?;
            let b = bias.as_ref().map(|n| model.weight(n)).transpose()?;
            Ok(conv2d_f(&x, wt, b, *stride, *padding))
        }
        Layer::Linear { weight, bias } => {
            let wt = model.weight(weight)?;
            let b = bias.as_ref().map(|n| model.weight(n)).transpose()?;
            Ok(linear_f(&x, wt, b))
        }
        Layer::Relu => {
            if x.ndim() == 3 {
                if ctx.capture_relu_inputs {
                    ctx.captured.push(x.clone());
                }
                gate_float(x, ctx)
            } else {
                Ok(x.mapv(|v| v.max(0.0)))
            }
        }
        Layer::Relu6 => Ok(x.mapv(|v| v.clamp(0.0, 6.0))),
        Layer::MaxPool { k, stride } => Ok(pool_f(&x, *k as usize, *stride as usize, true)),
        Layer::AvgPool { k, stride } => Ok(pool_f(&x, *k as usize, *stride as usize, false)),
        Layer::Flatten => {
            let v: Vec<f64> = x.iter().copied().collect();
            Ok(ArrayD::from_shape_vec(IxDyn(&[v.len()]), v).expect("flatten"))
        }
        Layer::Residual { body } => {
            let mut y = x.clone();
            for l in body {
                y = eval_float(model, l, y, ctx)?;
            }
            Ok(x + y)
        }
    }
}

fn gate_float(mut x: FTensor, ctx: &mut Ctx<'_>) -> Result<FTensor, ModelError> {
    let (c, h, w) = chw(&x);
    for ch in 0..c {
        let spec = ctx.spec_for_local(ch as u32)?;
        let mut chan = x.index_axis_mut(Axis(0), ch);
        match spec {
            PatchSpec::Identity => {}
            PatchSpec::Patch { ph, pw } => {
                let grid = PatchGrid::new(h as u32, w as u32, ph, pw)?;
                for (_, rows, cols) in grid.iter() {
                    let mut sum = 0.0;
                    for i in rows.clone() {
                        for j in cols.clone() {
                            sum += chan[[i as usize, j as usize]];
                        }
                    }
                    if sum < 0.0 {
                        for i in rows.clone() {
                            for j in cols.clone() {
                                chan[[i as usize, j as usize]] = 0.0;
                            }
                        }
                    }
                }
            }
        }
    }
    ctx.next_channel += c as u32;
    Ok(x)
}

fn conv2d_f(
    x: &FTensor,
    wt: &FTensor,
    bias: Option<&FTensor>,
    stride: u32,
    padding: Padding,
) -> FTensor {
    let (c, h, w) = chw(x);
    let (o, kh, kw) = (wt.shape()[0], wt.shape()[2], wt.shape()[3]);
    let (oh, pt) = conv_axis(h as u32, kh as u32, stride, padding);
    let (ow, pl) = conv_axis(w as u32, kw as u32, stride, padding);
    let s = stride as usize;
    let mut out = ArrayD::zeros(IxDyn(&[o, oh, ow]));
    for oc in 0..o {
        let b = bias.map_or(0.0, |b| b[oc]);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b;
                for ic in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * s + ky) as i64 - pt;
                        if iy < 0 || iy >= h as i64 {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * s + kx) as i64 - pl;
                            if ix < 0 || ix >= w as i64 {
                                continue;
                            }
                            acc += x[[ic, iy as usize, ix as usize]] * wt[[oc, ic, ky, kx]];
                        }
                    }
                }
                out[[oc, oy, ox]] = acc;
            }
        }
    }
    out
}

fn linear_f(x: &FTensor, wt: &FTensor, bias: Option<&FTensor>) -> FTensor {
    let (o, n) = (wt.shape()[0], wt.shape()[1]);
    let mut out = ArrayD::zeros(IxDyn(&[o]));
    for oi in 0..o {
        let mut acc = bias.map_or(0.0, |b| b[oi]);
        for i in 0..n {
            acc += wt[[oi, i]] * x[i];
        }
        out[oi] = acc;
    }
    out
}

fn pool_f(x: &FTensor, k: usize, s: usize, max: bool) -> FTensor {
    let (c, h, w) = chw(x);
    let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
    let mut out = ArrayD::zeros(IxDyn(&[c, oh, ow]));
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut agg = if max { f64::NEG_INFINITY } else { 0.0 };
                for ky in 0..k {
                    for kx in 0..k {
                        let v = x[[ch, oy * s + ky, ox * s + kx]];
                        agg = if max { agg.max(v) } else { agg + v };
                    }
                }
                out[[ch, oy, ox]] = if max { agg } else { agg / (k * k) as f64 };
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Fixed-point evaluator
// ---------------------------------------------------------------------------

pub struct FixedInterp<'m> {
    topo: Topo<'m>,
    codec: FixedPointCodec,
}

impl<'m> FixedInterp<'m> {
    pub fn new(model: &'m ModelGraph, codec: FixedPointCodec) -> Result<Self, ModelError> {
        // The secure counterpart evaluates only this layer set; reject the
        // rest up front so plain/secure runs agree on what is runnable.
        fn check(layers: &[Layer]) -> Result<(), ModelError> {
            for l in layers {
                match l {
                    Layer::Relu6 | Layer::MaxPool { .. } => {
                        return Err(ModelError::Unsupported(l.kind_name().to_string()));
                    }
                    Layer::Residual { body } => check(body)?,
                    _ => {}
                }
            }
            Ok(())
        }
        check(&model.layers)?;
        Ok(FixedInterp { topo: Topo::new(model)?, codec })
    }

    pub fn codec(&self) -> FixedPointCodec {
        self.codec
    }

    pub fn encode(&self, x: &FTensor) -> Result<RTensor, ModelError> {
        let data: Result<Vec<u64>, _> = x.iter().map(|&v| self.codec.encode(v)).collect();
        Ok(ArrayD::from_shape_vec(IxDyn(x.shape()), data?).expect("same shape"))
    }

    pub fn decode(&self, x: &RTensor) -> FTensor {
        x.mapv(|v| self.codec.decode(v))
    }

    pub fn forward(&self, x: &FTensor, plan: Option<&PatchPlan>) -> Result<FTensor, ModelError> {
        Ok(self.decode(&self.forward_ring(x, plan)?))
    }

    pub fn forward_ring(
        &self,
        x: &FTensor,
        plan: Option<&PatchPlan>,
    ) -> Result<RTensor, ModelError> {
        self.topo.check_input(x, 0)?;
        let mut ctx = Ctx::new(plan, 0);
        let mut cur = self.encode(x)?;
        for layer in &self.topo.model.layers {
            cur = self.eval_ring(layer, cur, &mut ctx)?;
        }
        Ok(cur)
    }

    fn encode_weight(&self, name: &str) -> Result<RTensor, ModelError> {
        self.encode(self.topo.model.weight(name)?)
    }

    fn eval_ring(&self, layer: &Layer, x: RTensor, ctx: &mut Ctx<'_>) -> Result<RTensor, ModelError> {
        let f = self.codec.frac_bits;
        match layer {
            Layer::Conv2d { weight, bias, stride, padding } => {
                let wt = self.encode_weight(weight)?;
                let b = bias.as_ref().map(|n| self.encode_weight(n)).transpose()?;
                Ok(conv2d_ring(&x, &wt, b.as_ref(), *stride, *padding, f))
            }
            Layer::Linear { weight, bias } => {
                let wt = self.encode_weight(weight)?;
                let b = bias.as_ref().map(|n| self.encode_weight(n)).transpose()?;
                Ok(linear_ring(&x, &wt, b.as_ref(), f))
            }
            Layer::Relu => {
                if x.ndim() == 3 {
                    gate_ring(x, ctx)
                } else {
                    Ok(x.mapv(|v| v.wrapping_mul(drelu_plain(v) as u64)))
                }
            }
            Layer::AvgPool { k, stride } => {
                let inv = self.codec.encode(1.0 / (*k as f64 * *k as f64))?;
                Ok(avgpool_ring(&x, *k as usize, *stride as usize, inv, f))
            }
            Layer::Flatten => {
                let v: Vec<u64> = x.iter().copied().collect();
                Ok(ArrayD::from_shape_vec(IxDyn(&[v.len()]), v).expect("flatten"))
            }
            Layer::Residual { body } => {
                let mut y = x.clone();
                for l in body {
                    y = self.eval_ring(l, y, ctx)?;
                }
                Zip::from(&mut y).and(&x).for_each(|y, &x| *y = y.wrapping_add(x));
                Ok(y)
            }
            Layer::Relu6 | Layer::MaxPool { .. } => {
                Err(ModelError::Unsupported(layer.kind_name().to_string()))
            }
        }
    }
}

fn gate_ring(mut x: RTensor, ctx: &mut Ctx<'_>) -> Result<RTensor, ModelError> {
    let (c, h, w) = chw(&x);
    for ch in 0..c {
        let spec = ctx.spec_for_local(ch as u32)?;
        let mut chan = x.index_axis_mut(Axis(0), ch);
        match spec {
            PatchSpec::Identity => {}
            PatchSpec::Patch { ph, pw } => {
                let grid = PatchGrid::new(h as u32, w as u32, ph, pw)?;
                for (_, rows, cols) in grid.iter() {
                    let mut sum = 0u64;
                    for i in rows.clone() {
                        for j in cols.clone() {
                            sum = sum.wrapping_add(chan[[i as usize, j as usize]]);
                        }
                    }
                    let bit = drelu_plain(sum);
                    for i in rows.clone() {
                        for j in cols.clone() {
                            let v = &mut chan[[i as usize, j as usize]];
                            *v = v.wrapping_mul(bit as u64);
                        }
                    }
                }
            }
        }
    }
    ctx.next_channel += c as u32;
    Ok(x)
}

fn conv2d_ring(
    x: &RTensor,
    wt: &RTensor,
    bias: Option<&RTensor>,
    stride: u32,
    padding: Padding,
    f: u32,
) -> RTensor {
    let (c, h, w) = chw(x);
    let (o, kh, kw) = (wt.shape()[0], wt.shape()[2], wt.shape()[3]);
    let (oh, pt) = conv_axis(h as u32, kh as u32, stride, padding);
    let (ow, pl) = conv_axis(w as u32, kw as u32, stride, padding);
    let s = stride as usize;
    let mut out = ArrayD::zeros(IxDyn(&[o, oh, ow]));
    for oc in 0..o {
        let b = bias.map_or(0, |b| b[oc]);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0u64;
                for ic in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * s + ky) as i64 - pt;
                        if iy < 0 || iy >= h as i64 {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * s + kx) as i64 - pl;
                            if ix < 0 || ix >= w as i64 {
                                continue;
                            }
                            acc = acc.wrapping_add(
                                x[[ic, iy as usize, ix as usize]]
                                    .wrapping_mul(wt[[oc, ic, ky, kx]]),
                            );
                        }
                    }
                }
                // Products sit at doubled scale; truncate first, then add the
                // single-scale bias — same order as the secure pipeline.
                out[[oc, oy, ox]] = trunc_ideal(acc, f).wrapping_add(b);
            }
        }
    }
    out
}

fn linear_ring(x: &RTensor, wt: &RTensor, bias: Option<&RTensor>, f: u32) -> RTensor {
    let (o, n) = (wt.shape()[0], wt.shape()[1]);
    let mut out = ArrayD::zeros(IxDyn(&[o]));
    for oi in 0..o {
        let mut acc = 0u64;
        for i in 0..n {
            acc = acc.wrapping_add(wt[[oi, i]].wrapping_mul(x[i]));
        }
        out[oi] = trunc_ideal(acc, f).wrapping_add(bias.map_or(0, |b| b[oi]));
    }
    out
}

fn avgpool_ring(x: &RTensor, k: usize, s: usize, inv: u64, f: u32) -> RTensor {
    let (c, h, w) = chw(x);
    let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
    let mut out = ArrayD::zeros(IxDyn(&[c, oh, ow]));
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut sum = 0u64;
                for ky in 0..k {
                    for kx in 0..k {
                        sum = sum.wrapping_add(x[[ch, oy * s + ky, ox * s + kx]]);
                    }
                }
                out[[ch, oy, ox]] = trunc_ideal(sum.wrapping_mul(inv), f);
            }
        }
    }
    out
}
