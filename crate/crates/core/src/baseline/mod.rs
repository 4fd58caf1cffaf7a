//! Native acoustic-feature burst classifier: eight frame-energy features
//! and a penalized logistic regression.

mod curve;
mod features;
mod logistic;

pub use curve::{balanced_prefix, curve_rows, data_size_curve, CurveError};

pub use features::{
    dip_depth, featurize, frame_energies_db, spike_rise, FeatureVector, ENERGY_FLOOR_DB, FEATURE_NAMES, FRAME_HOP,
    FRAME_LEN, MIN_SAMPLES, N_FEATURES,
};
pub use logistic::{LogisticFit, LogisticProblem, MAX_ITER};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioClip, CANONICAL_RATE};
use crate::classifier::{ClassifierBackend, ClassifierError};
use crate::linalg::Matrix;
use crate::numeric::{sigmoid, Real};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("clip has {samples} samples; featurize needs at least {minimum} (20 ms at 16 kHz)")]
    TooShort { samples: usize, minimum: usize },
    #[error("clip sample rate {0} Hz; featurize expects 16000 Hz")]
    SampleRate(u32),
    #[error("training data must contain both labels")]
    SingleClass,
    #[error("l2 must be finite and >= 0")]
    InvalidPenalty,
    #[error("perfect separation: the unpenalized fit diverges; use l2 > 0")]
    Separation,
    #[error("penalized Hessian is not positive definite")]
    SingularHessian,
    #[error("no convergence after {iterations} iterations (max |gradient| {gradient:e})")]
    NonConvergence { iterations: usize, gradient: f64 },
    #[error("{path}: {message}")]
    Persist { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n: usize,
    pub seed: u64,
    pub l2: f64,
    pub final_loss: f64,
    pub iterations: usize,
}

/// Standardized-feature logistic model. Features with zero training
/// variance are unused: their weight is zero and their sd is stored as 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BaselineModel<T> {
    pub feature_names: Vec<String>,
    pub weights: Vec<T>,
    pub bias: T,
    pub mean: Vec<T>,
    pub sd: Vec<T>,
    pub used: Vec<bool>,
    pub meta: TrainingMeta,
}

impl<T: Real> BaselineModel<T> {
    /// A model whose score is identically zero.
    pub fn zero() -> Self {
        Self {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: vec![T::zero(); N_FEATURES],
            bias: T::zero(),
            mean: vec![T::zero(); N_FEATURES],
            sd: vec![T::one(); N_FEATURES],
            used: vec![true; N_FEATURES],
            meta: TrainingMeta { n: 0, seed: 0, l2: 0.0, final_loss: 0.0, iterations: 0 },
        }
    }

    pub fn score(&self, f: &FeatureVector<T>) -> T {
        self.bias
            + (0..N_FEATURES)
                .filter(|&j| self.used[j])
                .map(|j| self.weights[j] * (f.0[j] - self.mean[j]) / self.sd[j])
                .sum::<T>()
    }

    pub fn probability(&self, f: &FeatureVector<T>) -> T {
        sigmoid(self.score(f))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| BaselineError::Persist { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        let err = |m: String| BaselineError::Persist { path: path.display().to_string(), message: m };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let n = model.feature_names.len();
        if n != N_FEATURES || [model.weights.len(), model.mean.len(), model.sd.len(), model.used.len()] != [n; 4] {
            return Err(err(format!("expected {N_FEATURES} features")));
        }
        if model.sd.iter().any(|s| *s <= T::zero()) {
            return Err(err("feature sd must be positive".into()));
        }
        Ok(model)
    }
}

/// Fits the baseline on labelled feature vectors (`true` = burst present).
/// Deterministic; `seed` is only recorded.
pub fn train_baseline<T: Real>(
    data: &[(FeatureVector<T>, bool)],
    l2: T,
    seed: u64,
) -> Result<BaselineModel<T>, BaselineError> {
    if !(l2 >= T::zero() && l2.is_finite()) {
        return Err(BaselineError::InvalidPenalty);
    }
    let positives = data.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == data.len() {
        return Err(BaselineError::SingleClass);
    }
    let n = T::from_usize_lossy(data.len());
    let mut mean = vec![T::zero(); N_FEATURES];
    let mut sd = vec![T::one(); N_FEATURES];
    let mut used = vec![false; N_FEATURES];
    for j in 0..N_FEATURES {
        let m = data.iter().map(|(f, _)| f.0[j]).sum::<T>() / n;
        let var = data.iter().map(|(f, _)| (f.0[j] - m).powi(2)).sum::<T>() / n;
        mean[j] = m;
        if var > T::zero() && var.sqrt() > m.abs() * T::epsilon() * T::lit(16.0) {
            sd[j] = var.sqrt();
            used[j] = true;
        }
    }
    let cols: Vec<usize> = (0..N_FEATURES).filter(|&j| used[j]).collect();
    let mut x = Vec::with_capacity(data.len() * cols.len());
    for (f, _) in data {
        x.extend(cols.iter().map(|&j| (f.0[j] - mean[j]) / sd[j]));
    }
    let y = data.iter().map(|(_, y)| if *y { T::one() } else { T::zero() }).collect();
    let problem = LogisticProblem::new(Matrix::from_rows(data.len(), cols.len(), x), y, l2);
    let fit = problem.fit()?;
    let mut weights = vec![T::zero(); N_FEATURES];
    for (k, &j) in cols.iter().enumerate() {
        weights[j] = fit.theta[k + 1];
    }
    Ok(BaselineModel {
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        weights,
        bias: fit.theta[0],
        mean,
        sd,
        used,
        meta: TrainingMeta {
            n: data.len(),
            seed,
            l2: l2.as_f64(),
            final_loss: fit.loss_trace.last().copied().unwrap_or(T::zero()).as_f64(),
            iterations: fit.iterations,
        },
    })
}

/// Probability of burst = present.
pub fn predict_baseline<T: Real>(model: &BaselineModel<T>, clip: &AudioClip<T>) -> Result<T, BaselineError> {
    Ok(model.probability(&featurize(clip)?))
}

/// Featurizes clips in parallel, preserving order.
pub fn featurize_all<T: Real>(clips: &[AudioClip<T>]) -> Result<Vec<FeatureVector<T>>, BaselineError> {
    clips.par_iter().map(featurize).collect()
}

/// The baseline behind the shared classifier contract.
#[derive(Debug, Clone)]
pub struct BaselineClassifier {
    pub model: BaselineModel<f64>,
}

impl ClassifierBackend for BaselineClassifier {
    fn name(&self) -> &str {
        "baseline"
    }

    fn expected_sample_rate(&self) -> u32 {
        CANONICAL_RATE
    }

    fn classify_batch(&self, clips: &[AudioClip<f32>]) -> Result<Vec<f64>, ClassifierError> {
        clips
            .par_iter()
            .map(|c| {
                featurize(&c.cast::<f64>())
                    .map(|f| self.model.probability(&f))
                    .map_err(|e| ClassifierError::Input(e.to_string()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{synthesize_balanced, synthesize_stop, Realization, SynthSpec};

    #[test]
    fn zero_model_gives_half() {
        let clip = AudioClip::new(vec![0.1f64; 800], 16000).unwrap();
        assert_eq!(predict_baseline(&BaselineModel::zero(), &clip).unwrap(), 0.5);
    }

    #[test]
    fn spike_feature_separates_realizations() {
        let full = synthesize_stop::<f64>(&SynthSpec::sample(Realization::FullStop, 20.0, 1)).unwrap().0;
        let fric = synthesize_stop::<f64>(&SynthSpec::sample(Realization::Fricativised, 20.0, 1)).unwrap().0;
        assert!(featurize(&full).unwrap().spike_rise_db() > 20.0);
        assert!(featurize(&fric).unwrap().spike_rise_db() < 10.0);
    }

    #[test]
    fn model_json_roundtrip() {
        let data = synthesize_balanced::<f64>(40, 20.0, 3).unwrap();
        let clips: Vec<_> = data.iter().map(|(c, _)| c.clone()).collect();
        let feats = featurize_all(&clips).unwrap();
        let labelled: Vec<_> =
            feats.into_iter().zip(&data).map(|(f, (_, b))| (f, b.as_binary().unwrap())).collect();
        let model = train_baseline(&labelled, 0.01, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        assert_eq!(BaselineModel::<f64>::load(&path).unwrap(), model);
    }

    #[test]
    fn single_class_rejected() {
        let f = FeatureVector([0.0f64; N_FEATURES]);
        assert!(matches!(train_baseline(&[(f, true), (f, true)], 1.0, 0), Err(BaselineError::SingleClass)));
    }
}
