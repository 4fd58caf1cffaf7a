use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, CANONICAL_RATE};
use crate::numeric::{median, Real};

use super::BaselineError;

pub const N_FEATURES: usize = 8;
pub const FRAME_LEN: usize = 80;
pub const FRAME_HOP: usize = 32;
/// 20 ms at 16 kHz.
pub const MIN_SAMPLES: usize = 320;
pub const ENERGY_FLOOR_DB: f64 = -100.0;
/// Frames in a ≥ 20 ms stretch at a 2 ms hop.
pub const MIN_GAP_FRAMES: usize = 10;
pub const GAP_BELOW_MEDIAN_DB: f64 = 15.0;
const RUNNING_MEDIAN_HALF: usize = 25;
const FFT_LEN: usize = 128;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "log_mean_energy",
    "log_min_energy",
    "log_max_energy",
    "dip_depth_db",
    "spike_rise_db",
    "spectral_flux_max",
    "zero_crossing_rate_mean",
    "log_duration",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T>(pub [T; N_FEATURES]);

impl<T: Real> FeatureVector<T> {
    pub fn get(&self, name: &str) -> Option<T> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn dip_depth_db(&self) -> T {
        self.0[3]
    }

    pub fn spike_rise_db(&self) -> T {
        self.0[4]
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()).collect()
}

/// Per-frame energy in dB (mean squared windowed sample), floored.
pub fn frame_energies_db(samples: &[f64]) -> Vec<f64> {
    let w = hann(FRAME_LEN);
    frames(samples.len())
        .map(|start| {
            let e = samples[start..start + FRAME_LEN].iter().zip(&w).map(|(x, w)| (x * w).powi(2)).sum::<f64>()
                / FRAME_LEN as f64;
            (10.0 * e.log10()).max(ENERGY_FLOOR_DB)
        })
        .collect()
}

fn frames(n: usize) -> impl Iterator<Item = usize> {
    let count = if n < FRAME_LEN { 0 } else { (n - FRAME_LEN) / FRAME_HOP + 1 };
    (0..count).map(|j| j * FRAME_HOP)
}

/// Largest drop below a centred running median of frame energies.
pub fn dip_depth(energy: &[f64]) -> f64 {
    let n = energy.len();
    (0..n)
        .map(|j| {
            let lo = j.saturating_sub(RUNNING_MEDIAN_HALF);
            let hi = (j + RUNNING_MEDIAN_HALF + 1).min(n);
            median(&energy[lo..hi]) - energy[j]
        })
        .fold(0.0, f64::max)
}

/// Largest rise over the 1–3 frames after a run of at least
/// [`MIN_GAP_FRAMES`] frames below `median - 15 dB`.
pub fn spike_rise(energy: &[f64]) -> f64 {
    if energy.is_empty() {
        return 0.0;
    }
    let threshold = median(energy) - GAP_BELOW_MEDIAN_DB;
    let mut best = 0.0f64;
    let mut run = 0usize;
    for j in 0..energy.len() {
        if energy[j] < threshold {
            run += 1;
            continue;
        }
        if run >= MIN_GAP_FRAMES {
            let last = j - 1;
            for k in 1..=3 {
                if let Some(e) = energy.get(last + k) {
                    best = best.max(e - energy[last]);
                }
            }
        }
        run = 0;
    }
    best
}

fn spectral_flux_max(samples: &[f64]) -> f64 {
    let w = hann(FRAME_LEN);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_LEN);
    let mut prev: Option<Vec<f64>> = None;
    let mut best = 0.0f64;
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
    for start in frames(samples.len()) {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, (x, w)) in samples[start..start + FRAME_LEN].iter().zip(&w).enumerate() {
            buf[i].re = x * w;
        }
        fft.process(&mut buf);
        let mag: Vec<f64> = buf[..=FFT_LEN / 2].iter().map(|c| c.norm()).collect();
        if let Some(p) = &prev {
            let flux = mag.iter().zip(p).map(|(m, q)| (m - q).max(0.0).powi(2)).sum::<f64>().sqrt();
            best = best.max(flux);
        }
        prev = Some(mag);
    }
    best
}

fn zcr_mean(samples: &[f64]) -> f64 {
    let rates: Vec<f64> = frames(samples.len())
        .map(|s| {
            let f = &samples[s..s + FRAME_LEN];
            f.windows(2).filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0)).count() as f64 / (FRAME_LEN - 1) as f64
        })
        .collect();
    rates.iter().sum::<f64>() / rates.len() as f64
}

/// Computes the eight baseline features on a 5 ms / 2 ms frame grid
/// anchored at sample 0.
pub fn featurize<T: Real>(clip: &AudioClip<T>) -> Result<FeatureVector<T>, BaselineError> {
    if clip.sample_rate() != CANONICAL_RATE {
        return Err(BaselineError::SampleRate(clip.sample_rate()));
    }
    if clip.len() < MIN_SAMPLES {
        return Err(BaselineError::TooShort { samples: clip.len(), minimum: MIN_SAMPLES });
    }
    let x: Vec<f64> = clip.samples().iter().map(|s| s.as_f64()).collect();
    let energy = frame_energies_db(&x);
    let mean = energy.iter().sum::<f64>() / energy.len() as f64;
    let min = energy.iter().copied().fold(f64::INFINITY, f64::min);
    let max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = [
        mean,
        min,
        max,
        dip_depth(&energy),
        spike_rise(&energy),
        spectral_flux_max(&x),
        zcr_mean(&x),
        clip.duration().ln(),
    ];
    Ok(FeatureVector(values.map(T::lit)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_has_no_dip_or_spike() {
        let clip = AudioClip::new(vec![0.0f64; 1600], 16000).unwrap();
        let f = featurize(&clip).unwrap();
        assert_eq!(f.dip_depth_db(), 0.0);
        assert_eq!(f.spike_rise_db(), 0.0);
        assert_eq!(f.0[0], ENERGY_FLOOR_DB);
        assert!(f.0.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn short_clip_names_minimum() {
        let clip = AudioClip::new(vec![0.0f32; 319], 16000).unwrap();
        let err = featurize(&clip).unwrap_err();
        assert!(err.to_string().contains("320"), "{err}");
    }

    #[test]
    fn gap_then_step_measures_rise() {
        // 15 frames at -60 dB, then a jump to -10 dB
        let mut e = vec![-10.0; 40];
        for v in e.iter_mut().skip(5).take(15) {
            *v = -60.0;
        }
        assert_eq!(spike_rise(&e), 50.0);
        // a 9-frame gap is too short
        let mut e = vec![-10.0; 40];
        for v in e.iter_mut().skip(5).take(9) {
            *v = -60.0;
        }
        assert_eq!(spike_rise(&e), 0.0);
    }

    #[test]
    fn frame_count_matches_grid() {
        assert_eq!(frame_energies_db(&vec![0.1; 320]).len(), (320 - 80) / 32 + 1);
    }
}
