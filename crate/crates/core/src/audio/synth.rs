//! Synthetic stop-like signals with a known burst label.
//!
//! Every clip is laid out as `[vowel][stop region][vowel]`. The stop region
//! depends on the realization:
//!
//! * `FullStop`: silent closure, a 2–5 ms broadband transient, then
//!   decaying aspiration noise (burst present);
//! * `Fricativised`: continuous band-passed noise, no silent gap (absent);
//! * `VoicedContinuant`: weak low-frequency periodic energy throughout (absent).
//!
//! White noise is added at the requested SNR relative to the clean signal.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AudioClip, AudioError, CANONICAL_RATE};
use crate::numeric::Real;
use crate::rng;
use crate::token::Burst;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    FullStop,
    Fricativised,
    VoicedContinuant,
}

impl Realization {
    pub const ALL: [Realization; 3] = [Realization::FullStop, Realization::Fricativised, Realization::VoicedContinuant];

    pub fn burst(self) -> Burst {
        match self {
            Realization::FullStop => Burst::Present,
            Realization::Fricativised | Realization::VoicedContinuant => Burst::Absent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub realization: Realization,
    pub closure_ms: f64,
    /// Peak linear amplitude of the release transient.
    pub burst_amp: f64,
    pub aspiration_ms: f64,
    pub noise_snr_db: f64,
    /// Whole clip, vowels included.
    pub duration_ms: f64,
    pub seed: u64,
}

/// Longest transient the generator draws.
const MAX_BURST_MS: f64 = 5.0;
const VOWEL_AMP: f64 = 0.3;

impl SynthSpec {
    /// Draws a spec with closure 20–80 ms, aspiration 5–30 ms and flanking
    /// vowels at least as long as the closure.
    pub fn sample(realization: Realization, noise_snr_db: f64, seed: u64) -> Self {
        let mut r = rng::stream(seed, "synth-spec");
        let closure_ms: f64 = r.gen_range(20.0..80.0);
        let aspiration_ms = r.gen_range(5.0..30.0);
        let vowel_ms = closure_ms.max(30.0) + 10.0;
        Self {
            realization,
            closure_ms,
            burst_amp: r.gen_range(0.5..0.9),
            aspiration_ms,
            noise_snr_db,
            duration_ms: closure_ms + MAX_BURST_MS + aspiration_ms + 2.0 * vowel_ms,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        let bad = |m: &str| Err(AudioError::InvalidSpec(m.to_string()));
        if !(self.closure_ms > 0.0 && self.aspiration_ms > 0.0 && self.duration_ms > 0.0) {
            return bad("durations must be positive");
        }
        if !self.noise_snr_db.is_finite() {
            return bad("snr must be finite");
        }
        if !(self.burst_amp > 0.0 && self.burst_amp <= 1.0) {
            return bad("burst amplitude must be in (0, 1]");
        }
        if self.duration_ms < self.closure_ms + MAX_BURST_MS + self.aspiration_ms {
            return bad("duration shorter than closure + burst + aspiration");
        }
        Ok(())
    }
}

fn ms_to_samples(ms: f64) -> usize {
    (ms * CANONICAL_RATE as f64 / 1000.0).round() as usize
}

fn vowel(len: usize, f0: f64, phase0: f64) -> Vec<f64> {
    let fs = CANONICAL_RATE as f64;
    // 1/k harmonic rolloff, normalized so the peak stays near VOWEL_AMP
    let harmonics: Vec<(f64, f64)> =
        (1..=12).map(|k| (k as f64, 1.0 / k as f64)).filter(|(k, _)| k * f0 < 4000.0).collect();
    let norm: f64 = harmonics.iter().map(|(_, a)| a).sum();
    (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            let v: f64 = harmonics
                .iter()
                .map(|&(k, a)| a * (2.0 * std::f64::consts::PI * k * f0 * t + phase0 * k).sin())
                .sum();
            VOWEL_AMP * v / norm * 1.2
        })
        .collect()
}

/// RBJ band-pass biquad (constant 0 dB peak gain).
fn bandpass(x: &[f64], center_hz: f64, q: f64) -> Vec<f64> {
    let w0 = 2.0 * std::f64::consts::PI * center_hz / CANONICAL_RATE as f64;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let a1 = -2.0 * w0.cos() / a0;
    let a2 = (1.0 - alpha) / a0;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&xi| {
            let y = b0 * xi + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = xi;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }
}

/// Sample positions of the stop region inside a synthesized clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopLayout {
    /// First sample after the leading vowel.
    pub stop_start: usize,
    /// First sample of the release transient (end of closure).
    pub release: usize,
    /// First sample of the trailing vowel.
    pub stop_end: usize,
}

/// Generates a 16 kHz clip for `spec` and returns it with its burst label.
/// Deterministic in `spec.seed`.
pub fn synthesize_stop<T: Real>(spec: &SynthSpec) -> Result<(AudioClip<T>, Burst), AudioError> {
    synthesize_stop_with_layout(spec).map(|(c, b, _)| (c, b))
}

/// [`synthesize_stop`] plus where the stop region sits in the clip.
pub fn synthesize_stop_with_layout<T: Real>(
    spec: &SynthSpec,
) -> Result<(AudioClip<T>, Burst, StopLayout), AudioError> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, "synth-signal");
    let total = ms_to_samples(spec.duration_ms);
    let burst_ms: f64 = r.gen_range(2.0..MAX_BURST_MS);
    let closure = ms_to_samples(spec.closure_ms);
    let burst = ms_to_samples(burst_ms).max(1);
    let aspiration = ms_to_samples(spec.aspiration_ms);
    let stop_len = closure + burst + aspiration;
    let lead = (total - stop_len) / 2;
    let trail = total - stop_len - lead;
    let f0 = r.gen_range(100.0..150.0);

    let mut signal = vowel(lead, f0, r.gen_range(0.0..std::f64::consts::TAU));
    match spec.realization {
        Realization::FullStop => {
            signal.extend(std::iter::repeat(0.0).take(closure));
            let tau = burst as f64;
            for i in 0..burst {
                let env = (-(i as f64) / tau).exp();
                signal.push(spec.burst_amp * env * r.gen_range(-1.0..1.0));
            }
            for i in 0..aspiration {
                let env = 1.0 - 0.7 * i as f64 / aspiration.max(1) as f64;
                signal.push(0.3 * spec.burst_amp * env * r.gen_range(-1.0..1.0));
            }
        }
        Realization::Fricativised => {
            let white: Vec<f64> = (0..stop_len + 256).map(|_| r.gen_range(-1.0..1.0)).collect();
            // drop the filter's start-up transient
            let shaped = bandpass(&white, 3500.0, 0.9);
            let shaped = &shaped[256..];
            let gain = 0.1 / rms(shaped).max(1e-12);
            signal.extend(shaped.iter().map(|v| v * gain));
        }
        Realization::VoicedContinuant => {
            let f = r.gen_range(100.0..150.0);
            let fs = CANONICAL_RATE as f64;
            let amp = r.gen_range(0.08..0.12);
            signal.extend((0..stop_len).map(|i| {
                let t = i as f64 / fs;
                amp * ((2.0 * std::f64::consts::PI * f * t).sin()
                    + 0.3 * (4.0 * std::f64::consts::PI * f * t).sin())
            }));
        }
    }
    signal.extend(vowel(trail, f0, r.gen_range(0.0..std::f64::consts::TAU)));

    let sigma = rms(&signal) / 10f64.powf(spec.noise_snr_db / 20.0);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    for v in signal.iter_mut() {
        *v += normal.sample(&mut r);
    }
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.999 { 0.999 / peak } else { 1.0 };
    let samples = signal.into_iter().map(|v| T::lit(v * scale)).collect();
    let layout = StopLayout { stop_start: lead, release: lead + closure, stop_end: lead + stop_len };
    Ok((AudioClip::new(samples, CANONICAL_RATE)?, spec.realization.burst(), layout))
}

/// Deterministic token seed for the `index`-th clip of a synthetic batch.
pub fn token_seed(seed: u64, index: u64) -> u64 {
    rng::substream(seed, "synth-batch", index).gen()
}

/// `n_per_label` burst-present clips (full stops) and as many absent clips
/// (alternating fricativised and voiced continuant), interleaved.
pub fn synthesize_balanced<T: Real>(
    n_per_label: usize,
    noise_snr_db: f64,
    seed: u64,
) -> Result<Vec<(AudioClip<T>, Burst)>, AudioError> {
    (0..2 * n_per_label)
        .map(|i| {
            let realization = if i % 2 == 0 {
                Realization::FullStop
            } else if (i / 2) % 2 == 0 {
                Realization::Fricativised
            } else {
                Realization::VoicedContinuant
            };
            synthesize_stop(&SynthSpec::sample(realization, noise_snr_db, token_seed(seed, i as u64)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// RMS of consecutive non-overlapping 5 ms frames.
    fn frame_rms(x: &[f32]) -> Vec<f64> {
        x.chunks_exact(80).map(|c| (c.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / 80.0).sqrt()).collect()
    }

    fn spec(realization: Realization) -> SynthSpec {
        SynthSpec {
            realization,
            closure_ms: 40.0,
            burst_amp: 0.8,
            aspiration_ms: 15.0,
            noise_snr_db: 30.0,
            duration_ms: 160.0,
            seed: 1,
        }
    }

    #[test]
    fn full_stop_has_dip_then_spike() {
        let (clip, label) = synthesize_stop::<f32>(&spec(Realization::FullStop)).unwrap();
        assert_eq!(label, Burst::Present);
        let rms = frame_rms(clip.samples());
        let (peak_idx, peak) =
            rms.iter().enumerate().skip(1).fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let min_before = rms[..peak_idx].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(peak / min_before > 10.0, "ratio {}", peak / min_before);
    }

    #[test]
    fn fricativised_has_no_silent_gap() {
        let (clip, label) = synthesize_stop::<f32>(&spec(Realization::Fricativised)).unwrap();
        assert_eq!(label, Burst::Absent);
        let rms = frame_rms(clip.samples());
        let mean = rms.iter().sum::<f64>() / rms.len() as f64;
        let min = rms.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min / mean > 0.2, "min/mean {}", min / mean);
    }

    #[test]
    fn deterministic_in_seed() {
        for r in Realization::ALL {
            let a = synthesize_stop::<f64>(&spec(r)).unwrap();
            let b = synthesize_stop::<f64>(&spec(r)).unwrap();
            assert_eq!(a, b);
        }
        let mut other = spec(Realization::FullStop);
        other.seed = 2;
        assert_ne!(synthesize_stop::<f64>(&other).unwrap().0, synthesize_stop::<f64>(&spec(Realization::FullStop)).unwrap().0);
    }

    #[test]
    fn length_and_bounds() {
        let s = SynthSpec::sample(Realization::VoicedContinuant, 20.0, 9);
        let (clip, _) = synthesize_stop::<f32>(&s).unwrap();
        assert_eq!(clip.len(), ms_to_samples(s.duration_ms));
        assert!(clip.samples().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec(Realization::FullStop);
        s.closure_ms = 0.0;
        assert!(synthesize_stop::<f32>(&s).is_err());
        let mut s = spec(Realization::FullStop);
        s.noise_snr_db = f64::NAN;
        assert!(synthesize_stop::<f32>(&s).is_err());
        let mut s = spec(Realization::FullStop);
        s.duration_ms = 30.0;
        assert!(synthesize_stop::<f32>(&s).is_err());
    }
}
