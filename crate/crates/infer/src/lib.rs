//! Neural burst classifiers exported to ONNX, behind the same
//! [`ClassifierBackend`] contract as the native baseline.
//!
//! A model file `name.onnx` travels with a sidecar `name.json`:
//!
//! ```json
//! {"base_model": "lv60", "sample_rate": 16000,
//!  "normalization": "zero_mean_unit_var", "labels": ["absent", "present"]}
//! ```
//!
//! The graph takes one `f32` waveform batch `[batch, samples]` and returns
//! `[batch, 2]` logits in the order given by `labels`.

pub mod fixture;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use burstkit::audio::{AudioClip, CANONICAL_RATE};
use burstkit::classifier::{ClassifierBackend, ClassifierError};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tract_onnx::prelude::*;

/// Shortest input the encoders accept; shorter clips are zero-padded.
pub const MIN_SAMPLES: usize = 400;
pub const MAX_BATCH: usize = 64;
/// Added to the variance before dividing, as the common feature extractors do.
pub const VARIANCE_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum InferError {
    #[error("model file not found: {0}")]
    NotFound(String),
    #[error("model metadata {path}: {message}")]
    Metadata { path: String, message: String },
    #[error("loading {path}: {message}")]
    Load { path: String, message: String },
    #[error("model output has shape {got:?}; expected [batch, 2]")]
    ShapeMismatch { got: Vec<usize> },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("backend fault: {0}")]
    Fault(String),
    #[error("parity fixture {path}: {message}")]
    Parity { path: String, message: String },
}

impl From<InferError> for ClassifierError {
    fn from(e: InferError) -> Self {
        match e {
            InferError::Input(m) => ClassifierError::Input(m),
            other => ClassifierError::Fault(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    ZeroMeanUnitVar,
    None,
}

/// Contents of the sidecar JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub base_model: String,
    pub sample_rate: u32,
    pub normalization: Normalization,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

impl ModelMeta {
    pub fn new(base_model: impl Into<String>) -> Self {
        Self {
            base_model: base_model.into(),
            sample_rate: CANONICAL_RATE,
            normalization: Normalization::ZeroMeanUnitVar,
            labels: vec!["absent".into(), "present".into()],
            run_id: None,
        }
    }

    /// Index of the `present` logit.
    fn present_index(&self) -> Result<usize, String> {
        let mut sorted = self.labels.clone();
        sorted.sort();
        if sorted != ["absent", "present"] {
            return Err(format!("labels must be absent and present, got {:?}", self.labels));
        }
        Ok(self.labels.iter().position(|l| l == "present").expect("checked above"))
    }
}

/// `x.onnx` -> `x.json`.
pub fn sidecar_path(model: &Path) -> PathBuf {
    model.with_extension("json")
}

/// `x.onnx` -> `x.parity.json`.
pub fn parity_path(model: &Path) -> PathBuf {
    model.with_extension("parity.json")
}

/// Zero mean, unit variance over the clip's own samples.
pub fn normalize(samples: &[f32]) -> Vec<f32> {
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().map(|&s| s as f64).sum::<f64>() / n;
    let var = samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var + VARIANCE_EPS).sqrt();
    samples.iter().map(|&s| ((s as f64 - mean) * scale) as f32).collect()
}

type Plan = TypedSimplePlan<TypedModel>;

/// A loaded, validated model. Immutable and safe to share across threads;
/// every call runs on its own execution state, nothing is serialized.
#[derive(Clone)]
pub struct NeuralModel {
    path: PathBuf,
    meta: ModelMeta,
    present: usize,
    plan: Arc<Plan>,
}

impl std::fmt::Debug for NeuralModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NeuralModel").field("path", &self.path).field("meta", &self.meta).finish()
    }
}

impl NeuralModel {
    /// Loads `path` and its sidecar, then checks the output shape with a
    /// zero probe of [`MIN_SAMPLES`] samples.
    pub fn load(path: &Path) -> Result<Self, InferError> {
        if !path.is_file() {
            return Err(InferError::NotFound(path.display().to_string()));
        }
        let side = sidecar_path(path);
        let meta_err = |message: String| InferError::Metadata { path: side.display().to_string(), message };
        let text = std::fs::read_to_string(&side).map_err(|e| meta_err(format!("cannot read sidecar: {e}")))?;
        let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| meta_err(e.to_string()))?;
        let present = meta.present_index().map_err(meta_err)?;
        if meta.sample_rate != CANONICAL_RATE {
            return Err(meta_err(format!("sample_rate {} (expected {CANONICAL_RATE})", meta.sample_rate)));
        }
        let load_err = |e: TractError| InferError::Load { path: path.display().to_string(), message: format!("{e:#}") };
        let plan = tract_onnx::onnx()
            .model_for_path(path)
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(load_err)?;
        let model = Self { path: path.to_path_buf(), meta, present, plan: Arc::new(plan) };
        let probe = model.logits(&[vec![0.0; MIN_SAMPLES]], MIN_SAMPLES)?;
        if probe.len() != 1 {
            return Err(InferError::ShapeMismatch { got: vec![probe.len()] });
        }
        Ok(model)
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Runs one batch of equal-length rows and returns `[batch][2]` logits.
    fn logits(&self, rows: &[Vec<f32>], len: usize) -> Result<Vec<[f32; 2]>, InferError> {
        let mut flat = Vec::with_capacity(rows.len() * len);
        for r in rows {
            flat.extend_from_slice(r);
            flat.resize(flat.len() + len - r.len(), 0.0);
        }
        let input = tract_ndarray::Array2::from_shape_vec((rows.len(), len), flat)
            .map_err(|e| InferError::Input(e.to_string()))?;
        let out = self
            .plan
            .run(tvec!(Tensor::from(input).into()))
            .map_err(|e| InferError::Fault(format!("{e:#}")))?;
        let t = out[0].to_array_view::<f32>().map_err(|e| InferError::Fault(format!("{e:#}")))?;
        let shape = t.shape().to_vec();
        if shape != [rows.len(), 2] {
            return Err(InferError::ShapeMismatch { got: shape });
        }
        Ok(t.outer_iter().map(|row| [row[0], row[1]]).collect())
    }

    /// P(present) per sample vector (already at the model rate). Clips are
    /// normalized, grouped by padded length and run in batches of at most
    /// [`MAX_BATCH`], so a clip's probability never depends on its
    /// batch-mates.
    pub fn probabilities(&self, clips: &[Vec<f32>]) -> Result<Vec<f64>, InferError> {
        let prepared: Vec<Vec<f32>> = clips
            .iter()
            .map(|c| match self.meta.normalization {
                Normalization::ZeroMeanUnitVar => normalize(c),
                Normalization::None => c.clone(),
            })
            .collect();
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, c) in prepared.iter().enumerate() {
            if c.is_empty() {
                return Err(InferError::Input(format!("clip {i} is empty")));
            }
            groups.entry(c.len().max(MIN_SAMPLES)).or_default().push(i);
        }
        let mut out = vec![f64::NAN; clips.len()];
        for (len, idx) in groups {
            for chunk in idx.chunks(MAX_BATCH) {
                let rows: Vec<Vec<f32>> = chunk.iter().map(|&i| prepared[i].clone()).collect();
                for (&i, l) in chunk.iter().zip(self.logits(&rows, len)?) {
                    out[i] = softmax_present(l, self.present)
                        .ok_or_else(|| InferError::Fault(format!("non-finite logits {l:?} for clip {i}")))?;
                }
            }
        }
        Ok(out)
    }
}

/// Softmax probability of logit `k`; `None` when a logit is not finite.
pub fn softmax_present(l: [f32; 2], k: usize) -> Option<f64> {
    let (a, b) = (l[0] as f64, l[1] as f64);
    if !(a.is_finite() && b.is_finite()) {
        return None;
    }
    let (own, other) = if k == 0 { (a, b) } else { (b, a) };
    Some(1.0 / (1.0 + (other - own).exp()))
}

impl ClassifierBackend for NeuralModel {
    fn name(&self) -> &str {
        &self.meta.base_model
    }

    fn expected_sample_rate(&self) -> u32 {
        self.meta.sample_rate
    }

    fn classify_batch(&self, clips: &[AudioClip<f32>]) -> Result<Vec<f64>, ClassifierError> {
        if let Some(c) = clips.iter().find(|c| c.sample_rate() != self.meta.sample_rate) {
            return Err(ClassifierError::Input(format!(
                "clip at {} Hz; model expects {} Hz",
                c.sample_rate(),
                self.meta.sample_rate
            )));
        }
        let raw: Vec<Vec<f32>> = clips.iter().map(|c| c.samples().to_vec()).collect();
        Ok(self.probabilities(&raw)?)
    }
}

/// Clips and the probabilities the exporting side computed for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityFixture {
    pub sample_rate: u32,
    pub clips: Vec<Vec<f32>>,
    pub probabilities: Vec<f64>,
}

impl ParityFixture {
    pub fn read(path: &Path) -> Result<Self, InferError> {
        let err = |message: String| InferError::Parity { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let f: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if f.clips.len() != f.probabilities.len() {
            return Err(err(format!("{} clips but {} probabilities", f.clips.len(), f.probabilities.len())));
        }
        Ok(f)
    }

    pub fn write(&self, path: &Path) -> Result<(), InferError> {
        let text = serde_json::to_string(self).expect("fixture serializes");
        std::fs::write(path, text).map_err(|e| InferError::Parity { path: path.display().to_string(), message: e.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub n: usize,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the backend against the exporter's own probabilities.
pub fn check_parity(model: &NeuralModel, fixture: &ParityFixture, tolerance: f64) -> Result<ParityReport, InferError> {
    if fixture.sample_rate != model.meta.sample_rate {
        return Err(InferError::Input(format!("fixture at {} Hz", fixture.sample_rate)));
    }
    let got = model.probabilities(&fixture.clips)?;
    let max_abs_diff = got.iter().zip(&fixture.probabilities).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(ParityReport { n: got.len(), max_abs_diff, tolerance, passed: max_abs_diff <= tolerance })
}
