//! Architecture substitutions that make a graph runnable by the secure
//! engine: max pooling becomes average pooling (same window and stride) and
//! ReLU6 becomes plain ReLU. Both substitutions preserve every intermediate
//! shape; they do *not* preserve the function, so a rewritten network should
//! be retrained before its accuracy is trusted (retraining is outside this
//! crate — the report flags it).

use serde::{Deserialize, Serialize};

use super::graph::{Layer, ModelError, ModelGraph};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    /// Dotted layer path, e.g. `"2"` or `"3.1"` for a layer inside a
    /// residual body.
    pub path: String,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TransformReport {
    pub replaced: Vec<Replacement>,
}

impl TransformReport {
    pub fn is_noop(&self) -> bool {
        self.replaced.is_empty()
    }

    /// Substitutions change the computed function, not just the wiring.
    pub fn requires_retraining(&self) -> bool {
        !self.replaced.is_empty()
    }
}

fn rewrite(layers: &mut [Layer], prefix: &str, report: &mut TransformReport) {
    for (i, layer) in layers.iter_mut().enumerate() {
        let path = if prefix.is_empty() { i.to_string() } else { format!("{prefix}.{i}") };
        match layer {
            Layer::MaxPool { k, stride } => {
                let (k, stride) = (*k, *stride);
                report.replaced.push(Replacement {
                    path,
                    from: "max_pool".into(),
                    to: "avg_pool".into(),
                });
                *layer = Layer::AvgPool { k, stride };
            }
            Layer::Relu6 => {
                report.replaced.push(Replacement {
                    path,
                    from: "relu6".into(),
                    to: "relu".into(),
                });
                *layer = Layer::Relu;
            }
            Layer::Residual { body } => rewrite(body, &path, report),
            _ => {}
        }
    }
}

/// Returns a copy of the model with secure-unfriendly layers substituted,
/// plus the list of substitutions made.
pub fn transform_model(model: &ModelGraph) -> Result<(ModelGraph, TransformReport), ModelError> {
    let before = model.infer_shapes()?;
    let mut out = model.clone();
    let mut report = TransformReport::default();
    rewrite(&mut out.layers, "", &mut report);
    let after = out.infer_shapes()?;
    debug_assert_eq!(before, after, "substitutions must preserve shapes");
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::interp::FloatInterp;
    use crate::tensor::modelio::{generate, random_input};

    #[test]
    fn rewrites_pooling_and_clamped_relu() {
        let m = generate("toy-pool", 2).unwrap();
        let before = m.infer_shapes().unwrap();
        let (t, report) = transform_model(&m).unwrap();

        assert_eq!(report.replaced.len(), 2);
        assert_eq!(report.replaced[0].from, "relu6");
        assert_eq!(report.replaced[1].from, "max_pool");
        assert!(report.requires_retraining());

        assert!(!t
            .layers
            .iter()
            .any(|l| matches!(l, Layer::MaxPool { .. } | Layer::Relu6)));
        assert_eq!(t.infer_shapes().unwrap(), before);

        // The rewritten graph still runs.
        let x = random_input(&t.input_shape_dims(), 0);
        FloatInterp::new(&t).unwrap().forward(&x, None).unwrap();
    }

    #[test]
    fn transform_is_idempotent() {
        let m = generate("toy-pool", 2).unwrap();
        let (t, _) = transform_model(&m).unwrap();
        let (t2, report) = transform_model(&t).unwrap();
        assert!(report.is_noop());
        assert_eq!(t.layers, t2.layers);
    }

    #[test]
    fn rewrites_inside_residual_bodies_with_dotted_paths() {
        let mut m = generate("toy-resnet", 1).unwrap();
        // Swap the in-body ReLU (residual is layer 2, body index 1) for ReLU6.
        let Layer::Residual { body } = &mut m.layers[2] else {
            panic!("layer 2 is the residual block");
        };
        body[1] = Layer::Relu6;

        let (t, report) = transform_model(&m).unwrap();
        assert_eq!(report.replaced.len(), 1);
        assert_eq!(report.replaced[0].path, "2.1");
        let Layer::Residual { body } = &t.layers[2] else { panic!() };
        assert_eq!(body[1], Layer::Relu);
    }
}
