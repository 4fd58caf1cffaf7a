use super::AudioClip;
use crate::numeric::Real;

/// Taps per output phase.
const TAPS: usize = 64;
const KAISER_BETA: f64 = 8.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(pos: f64, half_width: f64, norm: f64) -> f64 {
    let r = pos / half_width;
    if r.abs() > 1.0 {
        0.0
    } else {
        bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
///
/// Output length is `round(n * target / source)`. When the rates match the
/// input is returned unchanged.
pub fn resample<T: Real>(clip: &AudioClip<T>, target_rate: u32) -> AudioClip<T> {
    assert!(target_rate > 0, "target rate must be positive");
    let source_rate = clip.sample_rate();
    if source_rate == target_rate {
        return clip.clone();
    }
    let x: Vec<f64> = clip.samples().iter().map(|s| s.as_f64()).collect();
    let n = x.len();
    let ratio = target_rate as f64 / source_rate as f64;
    let out_len = ((n as f64 * ratio).round() as usize).max(1);
    // cutoff relative to the input Nyquist; below 1 when downsampling
    let cutoff = ratio.min(1.0) * 0.97;
    let half = (TAPS / 2) as f64;
    let norm = bessel_i0(KAISER_BETA);
    let step = source_rate as f64 / target_rate as f64;

    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let t = i as f64 * step;
        let base = t.floor() as i64;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for k in (base - TAPS as i64 / 2 + 1)..=(base + TAPS as i64 / 2) {
            let d = t - k as f64;
            let w = cutoff * sinc(cutoff * d) * kaiser(d, half, norm);
            wsum += w;
            if k >= 0 && (k as usize) < n {
                acc += w * x[k as usize];
            }
        }
        // unity DC gain regardless of phase
        let y = if wsum.abs() > 1e-12 { acc / wsum } else { acc };
        out.push(T::lit(y.clamp(-1.0, 1.0)));
    }
    AudioClip::new(out, target_rate).expect("resampled samples are finite and bounded")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    #[test]
    fn identity_when_rates_match() {
        let clip = AudioClip::new(vec![0.1f32, -0.3, 0.7, 0.0], 16_000).unwrap();
        assert_eq!(resample(&clip, 16_000), clip);
    }

    #[test]
    fn length_arithmetic() {
        let clip = AudioClip::new(vec![0.0f64; 800], 8_000).unwrap();
        assert_eq!(resample(&clip, 16_000).len(), 1600);
        let clip = AudioClip::new(vec![0.0f64; 44_100], 44_100).unwrap();
        assert_eq!(resample(&clip, 16_000).len(), 16_000);
        let clip = AudioClip::new(vec![0.0f64; 1001], 22_050).unwrap();
        let out = resample(&clip, 16_000);
        assert_eq!(out.len(), (1001.0f64 * 16_000.0 / 22_050.0).round() as usize);
        assert!((out.duration() - clip.duration()).abs() <= 1.0 / 16_000.0);
    }

    #[test]
    fn tone_frequency_survives_downsampling() {
        let src = 44_100;
        let samples: Vec<f64> =
            (0..src).map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / src as f64).sin()).collect();
        let out = resample(&AudioClip::new(samples, src as u32).unwrap(), 16_000);
        assert_eq!(out.len(), 16_000);
        let mut buf: Vec<Complex<f64>> = out.samples().iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let peak = (1..8000).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
        // 1 s of signal: bin k is k Hz
        assert!((peak as i64 - 440).abs() <= 1, "peak bin {peak}");
        // amplitude preserved away from the edges
        let mid = &out.samples()[4000..12000];
        let peak_amp = mid.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!((peak_amp - 0.5).abs() < 0.01, "amplitude {peak_amp}");
    }

    #[test]
    fn upsampling_preserves_low_tone() {
        let samples: Vec<f32> =
            (0..8000).map(|i| (0.4 * (2.0 * std::f64::consts::PI * 200.0 * i as f64 / 8000.0).sin()) as f32).collect();
        let out = resample(&AudioClip::new(samples, 8000).unwrap(), 16_000);
        for (i, &y) in out.samples().iter().enumerate().skip(200).take(15_000) {
            let t = i as f64 / 16_000.0;
            let want = 0.4 * (2.0 * std::f64::consts::PI * 200.0 * t).sin();
            assert!((y as f64 - want).abs() < 2e-3, "sample {i}: {y} vs {want}");
        }
    }
}
