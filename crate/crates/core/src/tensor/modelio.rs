//! Model persistence and toy-model generation.
//!
//! A model on disk is a JSON manifest plus a raw weight blob:
//!
//! * `manifest.json` — architecture, tensor directory, metadata;
//! * `weights.bin` — every tensor's data as little-endian `f32`, in manifest
//!   order, addressed by *element* offsets from the directory.
//!
//! Input/output tensors use a minimal header format: magic `NTEN`, a version
//! byte, a rank byte, little-endian `u32` dims, then little-endian `f32`
//! data in row-major order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::graph::{Layer, ModelGraph, Padding};
use super::FTensor;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("weight blob truncated: tensor {name} needs {need} elements at offset {offset}")]
    BlobTruncated { name: String, need: u64, offset: u64 },
    #[error("bad tensor file {path}: {msg}")]
    TensorFormat { path: PathBuf, msg: String },
    #[error("unknown model preset {0:?}")]
    UnknownPreset(String),
}

const MANIFEST_VERSION: u32 = 1;
const TENSOR_MAGIC: &[u8; 4] = b"NTEN";

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    /// Offset into the blob in f32 elements.
    offset: u64,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    name: String,
    input_shape: [u32; 3],
    layers: Vec<Layer>,
    weights_file: String,
    tensors: BTreeMap<String, TensorMeta>,
    #[serde(default)]
    meta: BTreeMap<String, serde_json::Value>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelIoError + '_ {
    move |source| ModelIoError::Io { path: path.to_path_buf(), source }
}

fn weight_blob(model: &ModelGraph) -> (BTreeMap<String, TensorMeta>, Vec<u8>) {
    let mut dir = BTreeMap::new();
    let mut blob = Vec::new();
    let mut offset = 0u64;
    for (name, tensor) in &model.weights {
        dir.insert(
            name.clone(),
            TensorMeta { offset, shape: tensor.shape().to_vec() },
        );
        for &v in tensor.iter() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
        offset += tensor.len() as u64;
    }
    (dir, blob)
}

fn manifest_for(model: &ModelGraph) -> (Manifest, Vec<u8>) {
    let (tensors, blob) = weight_blob(model);
    (
        Manifest {
            version: MANIFEST_VERSION,
            name: model.name.clone(),
            input_shape: [model.input_shape.0, model.input_shape.1, model.input_shape.2],
            layers: model.layers.clone(),
            weights_file: "weights.bin".to_string(),
            tensors,
            meta: BTreeMap::new(),
        },
        blob,
    )
}

/// Writes `manifest.json` and `weights.bin` into `dir`.
pub fn save_model(model: &ModelGraph, dir: &Path) -> Result<PathBuf, ModelIoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (manifest, blob) = manifest_for(model);
    let blob_path = dir.join(&manifest.weights_file);
    std::fs::write(&blob_path, &blob).map_err(io_err(&blob_path))?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json.as_bytes()).map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}

/// Loads a model from its manifest path; the blob is resolved next to it.
pub fn load_model(manifest_path: &Path) -> Result<ModelGraph, ModelIoError> {
    let raw = std::fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&raw).map_err(|e| ModelIoError::Manifest {
        path: manifest_path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(ModelIoError::Manifest {
            path: manifest_path.to_path_buf(),
            msg: format!("unsupported version {}", manifest.version),
        });
    }
    let blob_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.weights_file);
    let blob = std::fs::read(&blob_path).map_err(io_err(&blob_path))?;
    let floats: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();

    let mut weights = BTreeMap::new();
    for (name, meta) in &manifest.tensors {
        let len: usize = meta.shape.iter().product();
        let start = meta.offset as usize;
        let end = start + len;
        if end > floats.len() {
            return Err(ModelIoError::BlobTruncated {
                name: name.clone(),
                need: len as u64,
                offset: meta.offset,
            });
        }
        let data: Vec<f64> = floats[start..end].iter().map(|&v| v as f64).collect();
        let tensor = ArrayD::from_shape_vec(IxDyn(&meta.shape), data).map_err(|e| {
            ModelIoError::Manifest {
                path: manifest_path.to_path_buf(),
                msg: format!("tensor {name}: {e}"),
            }
        })?;
        weights.insert(name.clone(), tensor);
    }

    Ok(ModelGraph {
        name: manifest.name,
        input_shape: (
            manifest.input_shape[0],
            manifest.input_shape[1],
            manifest.input_shape[2],
        ),
        layers: manifest.layers,
        weights,
    })
}

/// Stable digest of architecture + weights, used by the session handshake.
pub fn model_hash(model: &ModelGraph) -> [u8; 32] {
    let (manifest, blob) = manifest_for(model);
    let mut h = Sha256::new();
    h.update(serde_json::to_string(&manifest).expect("manifest serializes").as_bytes());
    h.update(&blob);
    h.finalize().into()
}

// ---------------------------------------------------------------------------
// Tensor files
// ---------------------------------------------------------------------------

pub fn save_tensor(path: &Path, t: &FTensor) -> Result<(), ModelIoError> {
    let mut out = Vec::with_capacity(8 + t.len() * 4);
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(1); // version
    out.push(t.ndim() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&out).map_err(io_err(path))
}

pub fn load_tensor(path: &Path) -> Result<FTensor, ModelIoError> {
    let bad = |msg: &str| ModelIoError::TensorFormat {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut raw = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut raw)
        .map_err(io_err(path))?;
    if raw.len() < 6 || &raw[0..4] != TENSOR_MAGIC {
        return Err(bad("missing NTEN magic"));
    }
    if raw[4] != 1 {
        return Err(bad("unsupported version"));
    }
    let ndim = raw[5] as usize;
    let header = 6 + 4 * ndim;
    if raw.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| {
            u32::from_le_bytes(raw[6 + 4 * i..10 + 4 * i].try_into().expect("4 bytes")) as usize
        })
        .collect();
    let len: usize = dims.iter().product();
    if raw.len() != header + 4 * len {
        return Err(bad("data length does not match dims"));
    }
    let data: Vec<f64> = raw[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect();
    ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|_| bad("shape/data mismatch"))
}

// ---------------------------------------------------------------------------
// Toy models
// ---------------------------------------------------------------------------

struct Init {
    rng: ChaCha20Rng,
    weights: BTreeMap<String, ArrayD<f64>>,
}

impl Init {
    fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(b"model-w\0");
        Init { rng: ChaCha20Rng::from_seed(key), weights: BTreeMap::new() }
    }

    fn uniform(&mut self, scale: f64) -> f64 {
        // 53-bit mantissa draw in [-scale, scale).
        let u = (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        (2.0 * u - 1.0) * scale
    }

    fn tensor(&mut self, name: &str, shape: &[usize], scale: f64) {
        let len = shape.iter().product();
        let data: Vec<f64> = (0..len).map(|_| self.uniform(scale)).collect();
        self.weights.insert(name.to_string(), ArrayD::from_shape_vec(IxDyn(shape), data).unwrap());
    }

    fn conv(&mut self, name: &str, o: usize, i: usize, k: usize) -> Layer {
        let fan_in = (i * k * k) as f64;
        self.tensor(&format!("{name}.weight"), &[o, i, k, k], (1.0 / fan_in).sqrt());
        self.tensor(&format!("{name}.bias"), &[o], 0.1);
        Layer::Conv2d {
            weight: format!("{name}.weight"),
            bias: Some(format!("{name}.bias")),
            stride: 1,
            padding: Padding::Same,
        }
    }

    fn linear(&mut self, name: &str, o: usize, i: usize) -> Layer {
        self.tensor(&format!("{name}.weight"), &[o, i], (1.0 / i as f64).sqrt());
        self.tensor(&format!("{name}.bias"), &[o], 0.1);
        Layer::Linear {
            weight: format!("{name}.weight"),
            bias: Some(format!("{name}.bias")),
        }
    }
}

/// Deterministic toy models.
///
/// * `tiny` — one conv block over a 6×6 input; fastest smoke-test subject.
/// * `toy-cnn` — two conv+ReLU blocks, average pool, linear head (8×8 input).
/// * `toy-resnet` — stem conv plus a residual block, then pool and head.
/// * `toy-pool` — uses `max_pool` and `relu6`, the layers the architecture
///   transform rewrites.
pub fn generate(preset: &str, seed: u64) -> Result<ModelGraph, ModelIoError> {
    let mut init = Init::new(seed);
    let (input_shape, layers, name) = match preset {
        "tiny" => {
            let l = vec![
                init.conv("conv0", 2, 1, 3),
                Layer::Relu,
                Layer::Flatten,
                init.linear("head", 4, 2 * 6 * 6),
            ];
            ((1, 6, 6), l, "tiny")
        }
        "toy-cnn" => {
            let l = vec![
                init.conv("conv0", 4, 3, 3),
                Layer::Relu,
                init.conv("conv1", 4, 4, 3),
                Layer::Relu,
                Layer::AvgPool { k: 2, stride: 2 },
                Layer::Flatten,
                init.linear("head", 10, 4 * 4 * 4),
            ];
            ((3, 8, 8), l, "toy-cnn")
        }
        "toy-resnet" => {
            let stem = init.conv("stem", 8, 3, 3);
            let b0 = init.conv("block.conv0", 8, 8, 3);
            let b1 = init.conv("block.conv1", 8, 8, 3);
            let l = vec![
                stem,
                Layer::Relu,
                Layer::Residual { body: vec![b0, Layer::Relu, b1] },
                Layer::Relu,
                Layer::AvgPool { k: 2, stride: 2 },
                Layer::Flatten,
                init.linear("head", 10, 8 * 4 * 4),
            ];
            ((3, 8, 8), l, "toy-resnet")
        }
        "toy-pool" => {
            let c0 = init.conv("conv0", 4, 1, 3);
            let c1 = init.conv("conv1", 4, 4, 3);
            let l = vec![
                c0,
                Layer::Relu6,
                Layer::MaxPool { k: 2, stride: 2 },
                c1,
                Layer::Relu,
                Layer::Flatten,
                init.linear("head", 10, 4 * 4 * 4),
            ];
            ((1, 8, 8), l, "toy-pool")
        }
        other => return Err(ModelIoError::UnknownPreset(other.to_string())),
    };
    let model = ModelGraph {
        name: name.to_string(),
        input_shape,
        layers,
        weights: init.weights,
    };
    model.infer_shapes().expect("presets are well-formed");
    Ok(model)
}

pub fn preset_names() -> &'static [&'static str] {
    &["tiny", "toy-cnn", "toy-resnet", "toy-pool"]
}

/// Deterministic random input in `[-1, 1)` for demos and tests.
pub fn random_input(shape: &[usize], seed: u64) -> FTensor {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(b"input-x\0");
    let mut rng = ChaCha20Rng::from_seed(key);
    let len = shape.iter().product();
    let data: Vec<f64> = (0..len)
        .map(|_| {
            let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            2.0 * u - 1.0
        })
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_roundtrip_is_exact() {
        let model = generate("toy-cnn", 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_model(&model, dir.path()).unwrap();
        let back = load_model(&manifest).unwrap();
        assert_eq!(back.name, model.name);
        assert_eq!(back.input_shape, model.input_shape);
        assert_eq!(back.layers, model.layers);
        assert_eq!(back.weights.len(), model.weights.len());
        for (name, w) in &model.weights {
            let b = &back.weights[name];
            assert_eq!(b.shape(), w.shape());
            // Values survive the f32 round-trip exactly (they were f32-exact
            // when written) — compare against an explicit f32 cast.
            for (x, y) in w.iter().zip(b.iter()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        assert_eq!(model_hash(&back), model_hash(&back));
    }

    #[test]
    fn hash_tracks_weights_and_architecture() {
        let a = generate("toy-cnn", 1).unwrap();
        let b = generate("toy-cnn", 2).unwrap();
        assert_ne!(model_hash(&a), model_hash(&b));
        let mut c = generate("toy-cnn", 1).unwrap();
        assert_eq!(model_hash(&a), model_hash(&c));
        c.layers.push(Layer::Flatten);
        assert_ne!(model_hash(&a), model_hash(&c));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate("toy-resnet", 5).unwrap();
        let b = generate("toy-resnet", 5).unwrap();
        assert_eq!(a.weights, b.weights);
        for name in preset_names() {
            generate(name, 1).unwrap().infer_shapes().unwrap();
        }
        assert!(generate("nope", 1).is_err());
    }

    #[test]
    fn tensor_file_roundtrip() {
        let t = random_input(&[3, 4, 5], 7);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.nten");
        save_tensor(&p, &t).unwrap();
        let back = load_tensor(&p).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in t.iter().zip(back.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
        // Corrupt magic.
        std::fs::write(&p, b"XXXX rest").unwrap();
        assert!(load_tensor(&p).is_err());
    }

    #[test]
    fn random_input_is_bounded_and_seeded() {
        let a = random_input(&[16], 1);
        let b = random_input(&[16], 1);
        let c = random_input(&[16], 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| (-1.0..1.0).contains(v)));
    }
}
