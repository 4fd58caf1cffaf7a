//! The contract shared by every burst classifier backend.

use thiserror::Error;

use crate::audio::AudioClip;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("backend fault: {0}")]
    Fault(String),
}

/// Classifiers map 16 kHz clips to P(burst = present). The complement is
/// P(absent), so the pair always sums to one.
///
/// Implementations must be reentrant: callers share one instance across
/// threads.
pub trait ClassifierBackend: Send + Sync {
    fn name(&self) -> &str;

    fn expected_sample_rate(&self) -> u32;

    /// Order-preserving; an empty batch yields an empty result.
    fn classify_batch(&self, clips: &[AudioClip<f32>]) -> Result<Vec<f64>, ClassifierError>;
}
