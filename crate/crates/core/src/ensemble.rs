//! Manifest loading, budget-accounted model admission and the single forward call.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    is_valid_model_id, linear_predict, parse_model_file, preprocess, InputShape, LinearModel,
    PreprocessSpec, SampleBatch,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
}

/// Declarative ensemble configuration.
///
/// ```json
/// {
///   "memory_budget_bytes": 10000000,
///   "max_batch": 64,
///   "preprocess": {"mean": [0.5], "std": [0.25], "pixel_scale": 255},
///   "models": [{"id": "m1", "path": "m1.lin1.json"}]
/// }
/// ```
///
/// Relative model paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub memory_budget_bytes: u64,
    pub max_batch: usize,
    pub preprocess: PreprocessSpec,
    pub models: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ModelManifest {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedManifest(msg));
        if self.models.is_empty() {
            return bad("manifest lists no models".into());
        }
        if self.max_batch == 0 {
            return bad("max_batch must be >= 1".into());
        }
        if self.memory_budget_bytes == 0 {
            return bad("memory_budget_bytes must be >= 1".into());
        }
        self.preprocess
            .validate()
            .map_err(|e| Error::MalformedManifest(e.to_string()))?;
        let mut seen = HashSet::new();
        for entry in &self.models {
            if !is_valid_model_id(&entry.id) {
                return bad(format!(
                    "model id {:?} must match [A-Za-z0-9][A-Za-z0-9_.-]*",
                    entry.id
                ));
            }
            if !seen.insert(entry.id.as_str()) {
                return bad(format!("duplicate model id {:?}", entry.id));
            }
        }
        Ok(())
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut manifest = load_manifest(&bytes)?;
        manifest.base_dir = Some(
            path.parent()
                .map(Path::to_path_buf)
                .unwrap_or_default(),
        );
        Ok(manifest)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        match &self.base_dir {
            Some(dir) if entry.path.is_relative() => dir.join(&entry.path),
            _ => entry.path.clone(),
        }
    }
}

pub fn load_manifest(bytes: &[u8]) -> Result<ModelManifest> {
    let manifest: ModelManifest =
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedManifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Label indices per model, in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleOutput {
    pub model_ids: Vec<String>,
    pub per_model: Vec<Vec<usize>>,
}

impl EnsembleOutput {
    pub fn batch_size(&self) -> usize {
        self.per_model.first().map_or(0, Vec::len)
    }
}

/// N models resident in one budget-accounted pool, evaluated together.
#[derive(Debug)]
pub struct Ensemble {
    models: Vec<LinearModel>,
    shared_shape: InputShape,
    preprocess: PreprocessSpec,
    bytes_used: u64,
    memory_budget_bytes: u64,
    max_batch: usize,
    binary_compatible: bool,
    transforms: AtomicU64,
}

impl Ensemble {
    /// Admits `models` all at once or not at all.
    pub fn new(
        models: Vec<LinearModel>,
        preprocess: PreprocessSpec,
        memory_budget_bytes: u64,
        max_batch: usize,
    ) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::MalformedManifest("ensemble needs at least one model".into()))?;
        if max_batch == 0 {
            return Err(Error::MalformedManifest("max_batch must be >= 1".into()));
        }
        preprocess.validate()?;
        let shared_shape = first.input_shape().clone();

        let mut seen = HashSet::new();
        for m in &models {
            if !seen.insert(m.id()) {
                return Err(Error::MalformedManifest(format!(
                    "duplicate model id {:?}",
                    m.id()
                )));
            }
            if m.input_shape() != &shared_shape {
                return Err(Error::ShapeMismatch(format!(
                    "model {} has input shape {}, model {} has {}",
                    m.id(),
                    m.input_shape(),
                    first.id(),
                    shared_shape
                )));
            }
        }
        preprocess.check_shape(&shared_shape)?;

        let bytes_used = models
            .iter()
            .try_fold(0u64, |acc, m| acc.checked_add(m.parameter_bytes()))
            .unwrap_or(u64::MAX);
        if bytes_used > memory_budget_bytes {
            return Err(Error::BudgetExceeded {
                needed: bytes_used,
                budget: memory_budget_bytes,
            });
        }
        let binary_compatible = models.iter().all(LinearModel::is_binary);

        Ok(Ensemble {
            models,
            shared_shape,
            preprocess,
            bytes_used,
            memory_budget_bytes,
            max_batch,
            binary_compatible,
            transforms: AtomicU64::new(0),
        })
    }

    pub fn models(&self) -> &[LinearModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn shared_shape(&self) -> &InputShape {
        &self.shared_shape
    }

    pub fn preprocess_spec(&self) -> &PreprocessSpec {
        &self.preprocess
    }

    pub fn bytes_used(&self) -> u64 {
        self.bytes_used
    }

    pub fn memory_budget_bytes(&self) -> u64 {
        self.memory_budget_bytes
    }

    pub fn max_batch(&self) -> usize {
        self.max_batch
    }

    pub fn binary_compatible(&self) -> bool {
        self.binary_compatible
    }

    /// How many times the shared transform has run on this ensemble.
    pub fn preprocess_count(&self) -> u64 {
        self.transforms.load(Ordering::SeqCst)
    }

    /// Interprets `raw` under the shared shape.
    ///
    /// A flat `[D]` batch feeds a `[C, H, W]` ensemble (and the reverse) when
    /// the flattened lengths agree; values are read row-major either way.
    fn conform(&self, raw: &SampleBatch) -> Result<SampleBatch> {
        let shape = raw.shape();
        if shape == &self.shared_shape {
            return Ok(raw.clone());
        }
        if shape.len() == self.shared_shape.len() && (shape.is_flat() || self.shared_shape.is_flat())
        {
            return raw.clone().reshape(self.shared_shape.clone());
        }
        Err(Error::ShapeMismatch(format!(
            "batch shape {shape} does not match ensemble input shape {}",
            self.shared_shape
        )))
    }

    /// Preprocesses `raw` once and evaluates every model on the result.
    pub fn forward(&self, raw: &SampleBatch) -> Result<EnsembleOutput> {
        let b = raw.batch_size();
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        if b > self.max_batch {
            return Err(Error::BatchTooLarge {
                batch: b,
                max: self.max_batch,
            });
        }
        let raw = self.conform(raw)?;
        self.transforms.fetch_add(1, Ordering::SeqCst);
        let batch = preprocess(&raw, &self.preprocess)?;

        let per_model = self
            .models
            .iter()
            .map(|m| linear_predict(m, &batch))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleOutput {
            model_ids: self.models.iter().map(|m| m.id().to_string()).collect(),
            per_model,
        })
    }

    /// Renders label indices as each model's label strings.
    pub fn render_labels<'a>(&'a self, out: &EnsembleOutput) -> Vec<Vec<&'a str>> {
        self.models
            .iter()
            .zip(&out.per_model)
            .map(|(m, idx)| idx.iter().map(|&i| m.labels()[i].as_str()).collect())
            .collect()
    }
}

pub fn load_ensemble(manifest: &ModelManifest) -> Result<Ensemble> {
    manifest.validate()?;
    let models = manifest
        .models
        .iter()
        .map(|entry| {
            let path = manifest.resolve(entry);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let model = parse_model_file(&bytes)
                .map_err(|e| Error::MalformedModel(format!("{}: {e}", path.display())))?;
            if model.id() != entry.id {
                return Err(Error::MalformedModel(format!(
                    "{}: manifest entry {:?} but file declares id {:?}",
                    path.display(),
                    entry.id,
                    model.id()
                )));
            }
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(
        models,
        manifest.preprocess.clone(),
        manifest.memory_budget_bytes,
        manifest.max_batch,
    )
}
