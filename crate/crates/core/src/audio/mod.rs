//! Waveform handling: decoding, resampling, slicing and synthetic stops.

mod clip;
mod resample;
pub mod spectrogram;
pub mod synth;
mod wav;

pub use clip::{extract_clip, slice_clip, ClipExtract};
pub use resample::resample;
pub use spectrogram::{spectrogram, Spectrogram};
pub use synth::{
    synthesize_balanced, synthesize_stop, synthesize_stop_with_layout, token_seed, Realization, StopLayout, SynthSpec,
};
pub use wav::{decode_wav, encode_wav_pcm16, read_wav, wav_duration, write_wav_pcm16};

use thiserror::Error;

use crate::numeric::Real;

/// Rate every pipeline stage works at.
pub const CANONICAL_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    Unsupported(String),
    #[error("malformed WAV data: {0}")]
    Malformed(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("invalid span: start {start}, end {end}, context {context}")]
    InvalidSpan { start: f64, end: f64, context: f64 },
    #[error("span [{start}, {end}] lies outside the audio (duration {duration} s)")]
    OutOfRange { start: f64, end: f64, duration: f64 },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
}

/// Mono waveform with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> AudioClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(AudioError::InvalidClip("clip has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > T::one()) {
            return Err(AudioError::InvalidClip(format!("sample {i} is {} (must be finite, |x| <= 1)", samples[i])));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Like [`AudioClip::new`], but scales the signal down by its peak when
    /// the peak exceeds 1.
    pub fn peak_limited(mut samples: Vec<T>, sample_rate: u32) -> Result<Self, AudioError> {
        let peak = samples.iter().fold(T::zero(), |m, s| m.max(s.abs()));
        if peak > T::one() && peak.is_finite() {
            samples.iter_mut().for_each(|s| *s = *s / peak);
        }
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Converts the sample type.
    pub fn cast<U: Real>(&self) -> AudioClip<U> {
        AudioClip {
            samples: self.samples.iter().map(|&s| U::lit(s.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}
