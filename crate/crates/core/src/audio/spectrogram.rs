//! Short-time magnitude spectra for annotation displays.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::numeric::Real;

pub const WINDOW: usize = 512;
pub const HOP: usize = 160;
pub const FLOOR_DB: f32 = -80.0;

/// Frames × bins matrix of magnitudes in dB relative to a full-scale sine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub n_frames: usize,
    pub n_bins: usize,
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub floor_db: f32,
    /// Frame centre times, seconds from the clip start.
    pub times: Vec<f64>,
    pub freqs: Vec<f64>,
    /// `db[frame][bin]`.
    pub db: Vec<Vec<f32>>,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// STFT with a 512-sample Hann window and 160-sample hop. Frame count is
/// `floor((n - 512) / 160) + 1` (zero for clips shorter than one window).
pub fn spectrogram<T: Real>(clip: &AudioClip<T>) -> Spectrogram {
    let x: Vec<f64> = clip.samples().iter().map(|s| s.as_f64()).collect();
    let n_frames = if x.len() < WINDOW { 0 } else { (x.len() - WINDOW) / HOP + 1 };
    let n_bins = WINDOW / 2 + 1;
    let win = hann(WINDOW);
    let ref_mag = win.iter().sum::<f64>() / 2.0;
    let fft = FftPlanner::new().plan_fft_forward(WINDOW);
    let mut buf = vec![Complex::new(0.0, 0.0); WINDOW];
    let mut db = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let frame = &x[f * HOP..f * HOP + WINDOW];
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&win) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        db.push(
            buf[..n_bins]
                .iter()
                .map(|c| {
                    let m = c.norm() / ref_mag;
                    if m > 0.0 {
                        ((20.0 * m.log10()) as f32).max(FLOOR_DB)
                    } else {
                        FLOOR_DB
                    }
                })
                .collect(),
        );
    }
    let rate = clip.sample_rate() as f64;
    Spectrogram {
        n_frames,
        n_bins,
        sample_rate: clip.sample_rate(),
        window: WINDOW,
        hop: HOP,
        floor_db: FLOOR_DB,
        times: (0..n_frames).map(|f| (f * HOP + WINDOW / 2) as f64 / rate).collect(),
        freqs: (0..n_bins).map(|k| k as f64 * rate / WINDOW as f64).collect(),
        db,
    }
}
