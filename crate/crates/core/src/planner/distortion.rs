//! Per-(channel, candidate) distortion pricing.
//!
//! The price of gating channel `i` with candidate `j` is the mean squared
//! L2 movement of the network's pre-logits when only that one channel is
//! changed and every other channel keeps its plain elementwise ReLU,
//! averaged over a fixed sample batch.
//!
//! Changing channel `i` perturbs nothing upstream of its activation, so each
//! probe resumes from a cached copy of the activation entering that layer
//! rather than rerunning the whole network. The cached path is exact, not an
//! approximation; [`build_table_uncached`] is the quadratic-cost reference
//! it is validated against.

use std::path::Path;

use rayon::prelude::*;

use crate::patch::{PatchPlan, PatchSpec};
use crate::planner::candidates::candidate_specs;
use crate::planner::PlannerError;
use crate::tensor::interp::FloatInterp;
use crate::tensor::{FTensor, ModelGraph};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateCost {
    pub spec: PatchSpec,
    /// Sign decisions this candidate spends on its channel.
    pub weight: u64,
    /// Mean squared pre-logits movement over the sample batch.
    pub distortion: f64,
}

#[derive(Clone, Debug)]
pub struct ChannelCandidates {
    /// Global channel id.
    pub channel: u32,
    /// Flat layer id of the activation this channel belongs to.
    pub layer: u32,
    /// Channel height; zero when the table was loaded from CSV, which does
    /// not persist spatial dims (they are only needed while building).
    pub h: u32,
    pub w: u32,
    pub items: Vec<CandidateCost>,
}

/// One priced candidate list per plannable channel, in global channel order.
#[derive(Clone, Debug)]
pub struct DistortionTable {
    pub channels: Vec<ChannelCandidates>,
    /// Sample batch size the distortions were averaged over.
    pub samples: u32,
}

pub(crate) fn sq_l2(a: &FTensor, b: &FTensor) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// (channel, h, w, layer, flat layer id) for one plannable channel.
type ChannelProbe = (u32, u32, u32, u32, u16);

fn probe_channels(model: &ModelGraph) -> Result<Vec<ChannelProbe>, PlannerError> {
    let mut out = Vec::new();
    for site in model.relu_sites()? {
        for ch in site.channel_range() {
            out.push((ch, site.h, site.w, site.layer_id as u32, site.layer_id));
        }
    }
    Ok(out)
}

/// Prices every candidate of every channel over the sample batch, resuming
/// from cached upstream activations.
pub fn build_table(model: &ModelGraph, inputs: &[FTensor]) -> Result<DistortionTable, PlannerError> {
    build_table_inner(model, inputs, true)
}

/// Reference implementation that reruns the full network for every probe.
/// Quadratic in depth and only used to validate [`build_table`]'s caching.
pub fn build_table_uncached(
    model: &ModelGraph,
    inputs: &[FTensor],
) -> Result<DistortionTable, PlannerError> {
    build_table_inner(model, inputs, false)
}

fn build_table_inner(
    model: &ModelGraph,
    inputs: &[FTensor],
    cached: bool,
) -> Result<DistortionTable, PlannerError> {
    if inputs.is_empty() {
        return Err(PlannerError::NoSamples);
    }
    let interp = FloatInterp::new(model)?;
    let probes = probe_channels(model)?;
    let traces = inputs
        .iter()
        .map(|x| interp.forward_traced(x, None))
        .collect::<Result<Vec<_>, _>>()?;
    let template = PatchPlan::elementwise(
        &probes.iter().map(|&(_, _, _, layer, _)| layer).collect::<Vec<_>>(),
    );

    let channels = probes
        .par_iter()
        .map(|&(ch, h, w, layer, flat_id)| {
            let top = interp.top_of_flat(flat_id);
            let items = candidate_specs(h, w)
                .into_iter()
                .map(|spec| {
                    let weight = spec.drelu_count(h, w);
                    // Elementwise is the unchanged network: exactly zero.
                    let distortion = if spec == PatchSpec::ELEMENTWISE {
                        0.0
                    } else {
                        let mut plan = template.clone();
                        plan.entries[ch as usize].spec = spec;
                        let mut sum = 0.0;
                        for trace in &traces {
                            let moved = if cached {
                                interp.resume(top, &trace.inputs[top], Some(&plan))?.pre_logits
                            } else {
                                interp.resume(0, &trace.inputs[0], Some(&plan))?.pre_logits
                            };
                            sum += sq_l2(&moved, &trace.pre_logits);
                        }
                        sum / traces.len() as f64
                    };
                    Ok(CandidateCost { spec, weight, distortion })
                })
                .collect::<Result<Vec<_>, PlannerError>>()?;
            Ok(ChannelCandidates { channel: ch, layer, h, w, items })
        })
        .collect::<Result<Vec<_>, PlannerError>>()?;

    Ok(DistortionTable { channels, samples: inputs.len() as u32 })
}

impl DistortionTable {
    /// Minimum sign-decision spend per channel, summed — the cheapest any
    /// plan can be. Zero whenever identity is on offer.
    pub fn min_weight(&self) -> u64 {
        self.channels
            .iter()
            .map(|c| c.items.iter().map(|i| i.weight).min().unwrap_or(0))
            .sum()
    }

    /// Every channel's spend at plain elementwise ReLU.
    pub fn elementwise_weight(&self) -> u64 {
        self.channels
            .iter()
            .map(|c| c.items.iter().find(|i| i.spec == PatchSpec::ELEMENTWISE).map_or(0, |i| i.weight))
            .sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PlannerError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["channel_id", "layer", "ph", "pw", "weight", "distortion", "samples"])?;
        for cc in &self.channels {
            for item in &cc.items {
                let (ph, pw) = match item.spec {
                    PatchSpec::Identity => (0, 0),
                    PatchSpec::Patch { ph, pw } => (ph, pw),
                };
                w.write_record([
                    cc.channel.to_string(),
                    cc.layer.to_string(),
                    ph.to_string(),
                    pw.to_string(),
                    item.weight.to_string(),
                    item.distortion.to_string(),
                    self.samples.to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a table written by [`write_csv`]. Spatial dims are not part of
    /// the format; `h`/`w` come back zero, which the solver never needs.
    pub fn read_csv(path: &Path) -> Result<Self, PlannerError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut channels: Vec<ChannelCandidates> = Vec::new();
        let mut samples = 0u32;
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = idx + 2; // 1-based, after header
            let field = |i: usize| -> Result<&str, PlannerError> {
                rec.get(i).ok_or(PlannerError::CsvFormat {
                    row,
                    what: format!("missing column {i}"),
                })
            };
            let parse_u32 = |i: usize| -> Result<u32, PlannerError> {
                field(i)?.parse().map_err(|e| PlannerError::CsvFormat {
                    row,
                    what: format!("column {i}: {e}"),
                })
            };
            let channel = parse_u32(0)?;
            let layer = parse_u32(1)?;
            let (ph, pw) = (parse_u32(2)?, parse_u32(3)?);
            let weight: u64 = field(4)?.parse().map_err(|e| PlannerError::CsvFormat {
                row,
                what: format!("weight: {e}"),
            })?;
            let distortion: f64 = field(5)?.parse().map_err(|e| PlannerError::CsvFormat {
                row,
                what: format!("distortion: {e}"),
            })?;
            samples = field(6)?.parse().map_err(|e| PlannerError::CsvFormat {
                row,
                what: format!("samples: {e}"),
            })?;
            let spec = if ph == 0 && pw == 0 {
                PatchSpec::Identity
            } else {
                PatchSpec::Patch { ph, pw }
            };
            let item = CandidateCost { spec, weight, distortion };
            match channels.last_mut() {
                Some(cc) if cc.channel == channel => {
                    if cc.layer != layer {
                        return Err(PlannerError::CsvFormat {
                            row,
                            what: format!("channel {channel} listed under two layers"),
                        });
                    }
                    cc.items.push(item);
                }
                _ => channels.push(ChannelCandidates {
                    channel,
                    layer,
                    h: 0,
                    w: 0,
                    items: vec![item],
                }),
            }
        }
        if channels.is_empty() {
            return Err(PlannerError::EmptyTable);
        }
        Ok(DistortionTable { channels, samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::modelio::{generate, random_input};
    use crate::tensor::Layer;
    use ndarray::{ArrayD, IxDyn};
    use std::collections::BTreeMap;

    fn batch(model: &ModelGraph, n: u64) -> Vec<FTensor> {
        (0..n).map(|i| random_input(&model.input_shape_dims(), 100 + i)).collect()
    }

    #[test]
    fn table_covers_every_channel_and_candidate() {
        let model = generate("toy-cnn", 1).unwrap();
        let inputs = batch(&model, 4);
        let table = build_table(&model, &inputs).unwrap();
        assert_eq!(table.samples, 4);
        assert_eq!(table.channels.len(), 8);
        for (i, cc) in table.channels.iter().enumerate() {
            assert_eq!(cc.channel, i as u32);
            // 8×8 channels: 7 ladder sizes per axis, plus identity.
            assert_eq!(cc.items.len(), 7 * 7 + 1);
            for item in &cc.items {
                assert_eq!(item.weight, item.spec.drelu_count(cc.h, cc.w));
                assert!(item.distortion.is_finite() && item.distortion >= 0.0);
            }
            // Elementwise is the unchanged network.
            assert_eq!(cc.items[0].spec, PatchSpec::ELEMENTWISE);
            assert_eq!(cc.items[0].distortion, 0.0);
            // Coarser gating genuinely moves the output somewhere.
            assert!(cc.items.iter().any(|i| i.distortion > 0.0));
        }
        assert_eq!(table.min_weight(), 0);
        assert_eq!(table.elementwise_weight(), 8 * 64);
    }

    #[test]
    fn cached_resume_matches_full_recomputation() {
        let model = generate("toy-resnet", 3).unwrap();
        let inputs = batch(&model, 3);
        let fast = build_table(&model, &inputs).unwrap();
        let slow = build_table_uncached(&model, &inputs).unwrap();
        assert_eq!(fast.channels.len(), slow.channels.len());
        for (a, b) in fast.channels.iter().zip(&slow.channels) {
            for (x, y) in a.items.iter().zip(&b.items) {
                assert_eq!(x.spec, y.spec);
                let tol = 1e-12 * y.distortion.abs().max(1.0);
                assert!(
                    (x.distortion - y.distortion).abs() <= tol,
                    "channel {} {:?}: {} vs {}",
                    a.channel,
                    x.spec,
                    x.distortion,
                    y.distortion
                );
            }
        }
    }

    #[test]
    fn identity_is_free_on_an_always_positive_channel() {
        // Channel 0's bias is so large its activation never goes negative,
        // so removing its ReLU changes nothing; channel 1 is left generic.
        let mut weights = BTreeMap::new();
        weights.insert(
            "conv.w".to_string(),
            ArrayD::from_shape_vec(IxDyn(&[2, 1, 1, 1]), vec![1.0, -1.0]).unwrap(),
        );
        weights.insert(
            "conv.b".to_string(),
            ArrayD::from_shape_vec(IxDyn(&[2]), vec![100.0, 0.0]).unwrap(),
        );
        weights.insert(
            "head.w".to_string(),
            ArrayD::from_shape_vec(IxDyn(&[2, 32]), (0..64).map(|i| i as f64 * 0.1).collect())
                .unwrap(),
        );
        let model = ModelGraph {
            name: "biased".into(),
            input_shape: (1, 4, 4),
            layers: vec![
                Layer::Conv2d {
                    weight: "conv.w".into(),
                    bias: Some("conv.b".into()),
                    stride: 1,
                    padding: crate::tensor::Padding::Same,
                },
                Layer::Relu,
                Layer::Flatten,
                Layer::Linear { weight: "head.w".into(), bias: None },
            ],
            weights,
        };
        let inputs = batch(&model, 4);
        let table = build_table(&model, &inputs).unwrap();
        let identity = |ch: usize| {
            table.channels[ch]
                .items
                .iter()
                .find(|i| i.spec.is_identity())
                .unwrap()
                .distortion
        };
        assert_eq!(identity(0), 0.0);
        assert!(identity(1) > 0.0);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let model = generate("tiny", 1).unwrap();
        assert!(matches!(build_table(&model, &[]), Err(PlannerError::NoSamples)));
    }

    #[test]
    fn csv_round_trips_bitwise() {
        let model = generate("tiny", 2).unwrap();
        let inputs = batch(&model, 2);
        let table = build_table(&model, &inputs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        table.write_csv(&path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("channel_id,layer,ph,pw,weight,distortion,samples"));
        // Identity rows encode as a 0×0 patch.
        assert!(text.lines().any(|l| l.contains(",0,0,0,")));

        let back = DistortionTable::read_csv(&path).unwrap();
        assert_eq!(back.samples, table.samples);
        assert_eq!(back.channels.len(), table.channels.len());
        for (a, b) in back.channels.iter().zip(&table.channels) {
            assert_eq!((a.channel, a.layer), (b.channel, b.layer));
            assert_eq!((a.h, a.w), (0, 0));
            for (x, y) in a.items.iter().zip(&b.items) {
                assert_eq!(x.spec, y.spec);
                assert_eq!(x.weight, y.weight);
                assert_eq!(x.distortion.to_bits(), y.distortion.to_bits());
            }
        }
    }

    #[test]
    fn csv_reader_reports_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "channel_id,layer,ph,pw,weight,distortion,samples\n0,1,not-a-number,1,1,0.0,4\n",
        )
        .unwrap();
        assert!(matches!(
            DistortionTable::read_csv(&path),
            Err(PlannerError::CsvFormat { row: 2, .. })
        ));
    }
}
