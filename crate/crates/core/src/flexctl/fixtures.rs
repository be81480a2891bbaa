//! Deterministic LIN1 fixtures and manifests.
//!
//! Parameters come from SplitMix64 so a seed produces byte-identical files on
//! every platform and in every language that implements the same steps:
//!
//! ```text
//! state = state + 0x9E3779B97F4A7C15            (wrapping)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (wrapping)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB      (wrapping)
//! return z ^ (z >> 31)
//! ```
//!
//! A parameter is `(next() >> 40) * 2^-23 - 1`, an f32 in `[-1, 1)` with 24
//! significant bits. Weights are drawn row by row, then the bias.

use std::fs;
use std::path::{Path, PathBuf};

use crate::ensemble::{ManifestEntry, ModelManifest};
use crate::error::{Error, Result};
use crate::model::{parse_model_file, InputShape, LinearModel, PreprocessSpec, BINARY_LABELS};

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[-1, 1)`, exactly representable as f32.
    pub fn next_signed_unit(&mut self) -> f32 {
        let top = (self.next_u64() >> 40) as f32;
        top * (1.0 / 8_388_608.0) - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classes {
    Binary,
    Count(usize),
}

impl Classes {
    fn labels(self) -> Vec<String> {
        match self {
            Classes::Binary => BINARY_LABELS.iter().map(|s| s.to_string()).collect(),
            Classes::Count(k) => (0..k).map(|i| format!("class{i}")).collect(),
        }
    }
}

pub fn gen_model(seed: u64, input_dim: usize, classes: Classes, id: &str) -> Result<LinearModel> {
    if input_dim == 0 {
        return Err(Error::InvalidArgument("input dimension must be >= 1".into()));
    }
    gen_model_with_shape(seed, InputShape::flat(input_dim)?, classes, id)
}

/// Like [`gen_model`] but for any input shape, e.g. `[1, H, W]` images.
pub fn gen_model_with_shape(
    seed: u64,
    shape: InputShape,
    classes: Classes,
    id: &str,
) -> Result<LinearModel> {
    let labels = classes.labels();
    if labels.len() < 2 {
        return Err(Error::InvalidArgument("a model needs at least 2 classes".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let d = shape.len();
    let weights = (0..labels.len())
        .map(|_| (0..d).map(|_| rng.next_signed_unit()).collect())
        .collect();
    let bias = (0..labels.len()).map(|_| rng.next_signed_unit()).collect();
    LinearModel::new(id, shape, labels, weights, bias)
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Compact LIN1 JSON with a trailing newline.
pub fn model_document(model: &LinearModel) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(&model.to_document()).expect("LIN1 document serializes");
    bytes.push(b'\n');
    bytes
}

pub fn write_model(model: &LinearModel, path: &Path) -> Result<()> {
    fs::write(path, model_document(model)).map_err(|e| Error::io(path, e))
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

/// Builds a manifest for existing model files, as it would be written to `out`.
///
/// Model paths under the manifest's directory are stored relative to it;
/// others are stored absolute. Each entry's id is read from the model file.
pub fn gen_manifest(
    model_paths: &[PathBuf],
    memory_budget_bytes: u64,
    max_batch: usize,
    preprocess: PreprocessSpec,
    out: &Path,
) -> Result<ModelManifest> {
    let out_dir = absolute(out)?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut models = Vec::with_capacity(model_paths.len());
    for path in model_paths {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let model = parse_model_file(&bytes)?;
        let abs = absolute(path)?;
        let stored = abs
            .strip_prefix(&out_dir)
            .map(Path::to_path_buf)
            .unwrap_or(abs);
        models.push(ManifestEntry {
            id: model.id().to_string(),
            path: stored,
        });
    }
    let manifest = ModelManifest {
        memory_budget_bytes,
        max_batch,
        preprocess,
        models,
        base_dir: Some(out_dir),
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &ModelManifest, out: &Path) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    text.push(b'\n');
    fs::write(out, text).map_err(|e| Error::io(out, e))
}
