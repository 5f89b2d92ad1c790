//! Secure evaluation of a model graph.
//!
//! SPMD like everything else: all three parties walk the layers in the same
//! order, the evaluators on additive shares of the activations, the dealer
//! on zero tensors that only track shapes. Linear layers run one masked
//! tensor product each (two waves); activations run the sign pipeline on
//! per-patch sums and one gate multiply; average pooling, flattening, and
//! residual addition are local. A planned activation whose channels are all
//! identity costs nothing at all — no traffic, no waves.
//!
//! Layer ids mirror the model's depth-first preorder (containers included),
//! so ledger rows line up with the planner's and the analyzer's ids.

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};

use mpcnn_core::patch::{PatchGrid, PatchPlan, PatchSpec};
use mpcnn_core::ring::FixedPointCodec;
use mpcnn_core::tensor::{conv_axis, Layer, ModelGraph, Padding, RTensor, ReluSite};

use crate::context::SessionCtx;
use crate::protocols::mul::{
    conv_open, deal_conv_triples, deal_gate_triples, deal_linear_triples, gate_open, linear_open,
    DealRound,
};
use crate::protocols::sign::drelu;
use crate::wire::Tag;
use crate::ProtoError;

/// SecureML-style local truncation of one share: the two evaluators shift
/// in opposite "directions" so the reconstruction lands within one unit of
/// the ideal arithmetic shift.
pub fn trunc_share(j: u64, v: u64, f: u32) -> u64 {
    if j == 0 {
        v >> f
    } else {
        (v.wrapping_neg() >> f).wrapping_neg()
    }
}

/// Evaluates `model` on shares. Evaluators pass `Some(input_share)` and get
/// their share of the output; the dealer passes `None` and gets zeros of
/// the output shape.
pub fn eval_model(
    ctx: &mut SessionCtx,
    model: &ModelGraph,
    plan: Option<&PatchPlan>,
    input_share: Option<RTensor>,
) -> Result<RTensor, ProtoError> {
    model.infer_shapes()?; // full shape/weight validation up front
    reject_unsupported(&model.layers)?;
    let sites: HashMap<u16, ReluSite> =
        model.relu_sites()?.into_iter().map(|s| (s.layer_id, s)).collect();
    let codec = ctx.profile.codec();
    let weights = share_weights(ctx, model, codec)?;

    let cur = match input_share {
        Some(t) => {
            if t.shape() != model.input_shape_dims().as_slice() {
                return Err(ProtoError::Setup(format!(
                    "input share shape {:?} does not match model input {:?}",
                    t.shape(),
                    model.input_shape_dims()
                )));
            }
            t
        }
        None => ArrayD::zeros(IxDyn(&model.input_shape_dims())),
    };

    let mut eng = Engine { ctx, model, plan, sites, weights, codec };
    let mut next_id = 0u16;
    eng.eval_layers(&model.layers, cur, &mut next_id)
}

fn reject_unsupported(layers: &[Layer]) -> Result<(), ProtoError> {
    for l in layers {
        match l {
            Layer::Relu6 | Layer::MaxPool { .. } => {
                return Err(ProtoError::Unsupported(l.kind_name().to_string()));
            }
            Layer::Residual { body } => reject_unsupported(body)?,
            _ => {}
        }
    }
    Ok(())
}

/// Splits the encoded weights between the evaluators: the masks come off
/// their shared stream (so this draws in a fixed flat order, weight before
/// bias), evaluator 1 keeps the corrections. The dealer holds none.
fn share_weights(
    ctx: &mut SessionCtx,
    model: &ModelGraph,
    codec: FixedPointCodec,
) -> Result<HashMap<String, RTensor>, ProtoError> {
    let mut out = HashMap::new();
    if ctx.is_dealer() {
        return Ok(out);
    }
    let j = ctx.j();
    fn walk(
        layers: &[Layer],
        model: &ModelGraph,
        ctx: &mut SessionCtx,
        codec: FixedPointCodec,
        j: u64,
        out: &mut HashMap<String, RTensor>,
    ) -> Result<(), ProtoError> {
        for l in layers {
            match l {
                Layer::Conv2d { weight, bias, .. } | Layer::Linear { weight, bias } => {
                    share_one(weight, model, ctx, codec, j, out)?;
                    if let Some(b) = bias {
                        share_one(b, model, ctx, codec, j, out)?;
                    }
                }
                Layer::Residual { body } => walk(body, model, ctx, codec, j, out)?,
                _ => {}
            }
        }
        Ok(())
    }
    fn share_one(
        name: &str,
        model: &ModelGraph,
        ctx: &mut SessionCtx,
        codec: FixedPointCodec,
        j: u64,
        out: &mut HashMap<String, RTensor>,
    ) -> Result<(), ProtoError> {
        let plain = model.weight(name)?;
        let enc: Result<Vec<u64>, _> = plain.iter().map(|&v| codec.encode(v)).collect();
        let enc = enc?;
        let masks =
            crate::seeds::draw_ring_vec(ctx.seeds.evaluators(), enc.len());
        let share: Vec<u64> = if j == 0 {
            masks
        } else {
            enc.iter().zip(&masks).map(|(e, m)| e.wrapping_sub(*m)).collect()
        };
        out.insert(
            name.to_string(),
            ArrayD::from_shape_vec(IxDyn(plain.shape()), share).expect("same shape"),
        );
        Ok(())
    }
    walk(&model.layers, model, ctx, codec, j, &mut out)?;
    Ok(out)
}

struct Engine<'a> {
    ctx: &'a mut SessionCtx,
    model: &'a ModelGraph,
    plan: Option<&'a PatchPlan>,
    sites: HashMap<u16, ReluSite>,
    weights: HashMap<String, RTensor>,
    codec: FixedPointCodec,
}

impl Engine<'_> {
    fn eval_layers(
        &mut self,
        layers: &[Layer],
        mut cur: RTensor,
        next_id: &mut u16,
    ) -> Result<RTensor, ProtoError> {
        for layer in layers {
            let id = *next_id;
            *next_id += 1;
            self.ctx.layer = id;
            cur = match layer {
                Layer::Conv2d { weight, bias, stride, padding } => {
                    self.conv2d(cur, weight, bias.as_deref(), *stride, *padding)?
                }
                Layer::Linear { weight, bias } => {
                    self.linear(cur, weight, bias.as_deref())?
                }
                Layer::Relu => {
                    if cur.ndim() == 3 {
                        let site = *self.sites.get(&id).expect("spatial relu is a site");
                        self.gated_relu(cur, site)?
                    } else {
                        self.flat_relu(cur)?
                    }
                }
                Layer::AvgPool { k, stride } => {
                    self.avgpool(cur, *k as usize, *stride as usize)?
                }
                Layer::Flatten => {
                    let v: Vec<u64> = cur.iter().copied().collect();
                    ArrayD::from_shape_vec(IxDyn(&[v.len()]), v).expect("flatten")
                }
                Layer::Residual { body } => {
                    let input = cur.clone();
                    let mut body_out = self.eval_layers(body, cur, next_id)?;
                    body_out.zip_mut_with(&input, |y, &x| *y = y.wrapping_add(x));
                    body_out
                }
                Layer::Relu6 | Layer::MaxPool { .. } => {
                    return Err(ProtoError::Unsupported(layer.kind_name().to_string()));
                }
            };
        }
        Ok(cur)
    }

    fn weight_share(&self, name: &str) -> &RTensor {
        self.weights.get(name).expect("weight shares populated during setup")
    }

    fn conv2d(
        &mut self,
        cur: RTensor,
        weight: &str,
        bias: Option<&str>,
        stride: u32,
        padding: Padding,
    ) -> Result<RTensor, ProtoError> {
        let w_shape = self.model.weight(weight)?.shape().to_vec();
        let triple = deal_conv_triples(
            self.ctx,
            Tag::ConvC1,
            cur.shape(),
            &w_shape,
            stride,
            padding,
        )?;
        if self.ctx.is_dealer() {
            conv_open(self.ctx, Tag::ConvMaskIn, Tag::ConvMaskW, &cur, &cur, &triple, stride, padding)?;
            let (oh, _) = conv_axis(cur.shape()[1] as u32, w_shape[2] as u32, stride, padding);
            let (ow, _) = conv_axis(cur.shape()[2] as u32, w_shape[3] as u32, stride, padding);
            return Ok(ArrayD::zeros(IxDyn(&[w_shape[0], oh, ow])));
        }
        let wt = self.weight_share(weight).clone();
        let raw = conv_open(self.ctx, Tag::ConvMaskIn, Tag::ConvMaskW, &cur, &wt, &triple, stride, padding)?;
        let j = self.ctx.j();
        let f = self.codec.frac_bits;
        let mut out = raw.mapv(|v| trunc_share(j, v, f));
        if let Some(bname) = bias {
            let b = self.weight_share(bname).clone();
            for oc in 0..out.shape()[0] {
                out.index_axis_mut(ndarray::Axis(0), oc)
                    .mapv_inplace(|v| v.wrapping_add(b[oc]));
            }
        }
        Ok(out)
    }

    fn linear(
        &mut self,
        cur: RTensor,
        weight: &str,
        bias: Option<&str>,
    ) -> Result<RTensor, ProtoError> {
        let w_shape = self.model.weight(weight)?.shape().to_vec();
        let (o, n) = (w_shape[0], w_shape[1]);
        let triple = deal_linear_triples(self.ctx, Tag::LinC1, n, o)?;
        if self.ctx.is_dealer() {
            linear_open(self.ctx, Tag::LinMaskIn, Tag::LinMaskW, &cur, &cur, &triple)?;
            return Ok(ArrayD::zeros(IxDyn(&[o])));
        }
        let wt = self.weight_share(weight).clone();
        let raw = linear_open(self.ctx, Tag::LinMaskIn, Tag::LinMaskW, &cur, &wt, &triple)?;
        let j = self.ctx.j();
        let f = self.codec.frac_bits;
        let mut out = raw.mapv(|v| trunc_share(j, v, f));
        if let Some(bname) = bias {
            let b = self.weight_share(bname).clone();
            out.zip_mut_with(&b, |v, &bv| *v = v.wrapping_add(bv));
        }
        Ok(out)
    }

    /// Block activation over one spatial site: per-patch sums feed the sign
    /// pipeline, one gate multiply applies the decisions, identity channels
    /// pass through untouched.
    fn gated_relu(&mut self, cur: RTensor, site: ReluSite) -> Result<RTensor, ProtoError> {
        let (c, h, w) = (cur.shape()[0], cur.shape()[1], cur.shape()[2]);
        let mut specs = Vec::with_capacity(c);
        for local in 0..c as u32 {
            let spec = match self.plan {
                Some(p) => p.spec_for(site.first_channel + local)?,
                None => PatchSpec::ELEMENTWISE,
            };
            spec.validate(h as u32, w as u32)?;
            specs.push(spec);
        }
        if specs.iter().all(|s| s.is_identity()) {
            return Ok(cur);
        }

        let mut sums = Vec::new();
        let mut sizes = Vec::new();
        let mut values = Vec::new();
        let mut slots = Vec::new();
        for (ch, spec) in specs.iter().enumerate() {
            let PatchSpec::Patch { ph, pw } = *spec else { continue };
            let grid = PatchGrid::new(h as u32, w as u32, ph, pw)?;
            for (_, rows, cols) in grid.iter() {
                let mut sum = 0u64;
                let mut len = 0usize;
                for i in rows.clone() {
                    for j in cols.clone() {
                        let v = cur[[ch, i as usize, j as usize]];
                        sum = sum.wrapping_add(v);
                        values.push(v);
                        slots.push((ch, i as usize, j as usize));
                        len += 1;
                    }
                }
                sums.push(sum);
                sizes.push(len);
            }
        }

        let bits = drelu(self.ctx, sums.len(), &sums)?;
        let triple = deal_gate_triples(self.ctx, Tag::GateC1, &sizes, DealRound::Absorbed)?;
        let gated = gate_open(self.ctx, Tag::GateOpen, &bits, &values, &sizes, &triple)?;
        let mut out = cur;
        if !self.ctx.is_dealer() {
            for (k, &(ch, i, j)) in slots.iter().enumerate() {
                out[[ch, i, j]] = gated[k];
            }
        }
        Ok(out)
    }

    /// ReLU over a flattened tensor: always elementwise (each element is its
    /// own patch).
    fn flat_relu(&mut self, cur: RTensor) -> Result<RTensor, ProtoError> {
        let flat: Vec<u64> = cur.iter().copied().collect();
        let n = flat.len();
        let bits = drelu(self.ctx, n, &flat)?;
        let sizes = vec![1usize; n];
        let triple = deal_gate_triples(self.ctx, Tag::GateC1, &sizes, DealRound::Absorbed)?;
        let gated = gate_open(self.ctx, Tag::GateOpen, &bits, &flat, &sizes, &triple)?;
        if self.ctx.is_dealer() {
            Ok(cur)
        } else {
            Ok(ArrayD::from_shape_vec(cur.raw_dim(), gated).expect("same length"))
        }
    }

    /// Average pooling is local: sliding share sums times the public encoded
    /// `1/k²`, truncated once.
    fn avgpool(&mut self, cur: RTensor, k: usize, s: usize) -> Result<RTensor, ProtoError> {
        let (c, h, w) = (cur.shape()[0], cur.shape()[1], cur.shape()[2]);
        let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
        if self.ctx.is_dealer() {
            return Ok(ArrayD::zeros(IxDyn(&[c, oh, ow])));
        }
        let inv = self.codec.encode(1.0 / (k as f64 * k as f64))?;
        let j = self.ctx.j();
        let f = self.codec.frac_bits;
        let mut out = ArrayD::zeros(IxDyn(&[c, oh, ow]));
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut sum = 0u64;
                    for ky in 0..k {
                        for kx in 0..k {
                            sum = sum.wrapping_add(cur[[ch, oy * s + ky, ox * s + kx]]);
                        }
                    }
                    out[[ch, oy, ox]] = trunc_share(j, sum.wrapping_mul(inv), f);
                }
            }
        }
        Ok(out)
    }
}
