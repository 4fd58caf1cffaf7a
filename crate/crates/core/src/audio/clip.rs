use std::path::Path;

use super::{read_wav, resample, AudioClip, AudioError, CANONICAL_RATE};
use crate::numeric::Real;

/// A token's audio plus where it actually came from in the file.
#[derive(Debug, Clone)]
pub struct ClipExtract<T> {
    pub clip: AudioClip<T>,
    /// Time of the clip's first sample within the source, seconds.
    pub offset: f64,
    /// The context window was cut short at a file edge.
    pub clamped: bool,
}

/// Cuts `[start - context, end + context]` out of `audio`, clamping at the
/// edges. Unclamped output has exactly `round((end - start + 2·context)·rate)`
/// samples.
pub fn slice_clip<T: Real>(
    audio: &AudioClip<T>,
    start: f64,
    end: f64,
    context: f64,
) -> Result<ClipExtract<T>, AudioError> {
    if !(start < end) || !(context >= 0.0) || !start.is_finite() || !end.is_finite() || !context.is_finite() {
        return Err(AudioError::InvalidSpan { start, end, context });
    }
    let rate = audio.sample_rate() as f64;
    let n = audio.len() as i64;
    let first = ((start - context) * rate).round() as i64;
    let len = ((end - start + 2.0 * context) * rate).round() as i64;
    let last = first + len;
    let lo = first.max(0);
    let hi = last.min(n);
    if hi <= lo {
        return Err(AudioError::OutOfRange { start, end, duration: audio.duration() });
    }
    let samples = audio.samples()[lo as usize..hi as usize].to_vec();
    Ok(ClipExtract {
        clip: AudioClip::new(samples, audio.sample_rate())?,
        offset: lo as f64 / rate,
        clamped: lo != first || hi != last,
    })
}

/// Reads `path`, brings it to the canonical rate and slices the token span
/// with `context` seconds on either side.
pub fn extract_clip<T: Real>(path: &Path, start: f64, end: f64, context: f64) -> Result<ClipExtract<T>, AudioError> {
    let audio: AudioClip<T> = read_wav(path)?;
    let audio = resample(&audio, CANONICAL_RATE);
    slice_clip(&audio, start, end, context)
}
