use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use burstkit::audio::{read_wav, resample, slice_clip, AudioClip, CANONICAL_RATE};
use burstkit::token::StopToken;
use rayon::prelude::*;

/// Canonical-rate clips for `records`, in order, each with `context`
/// seconds either side. Every recording is decoded once.
pub fn token_clips(records: &[StopToken], context: f64) -> anyhow::Result<Vec<AudioClip<f32>>> {
    let mut by_file: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_file.entry(r.audio_path.as_str()).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = by_file.into_iter().collect();
    let cut: Vec<Vec<(usize, AudioClip<f32>)>> = groups
        .par_iter()
        .map(|(path, idx)| {
            let audio: AudioClip<f32> = read_wav(Path::new(path)).with_context(|| format!("reading {path}"))?;
            let audio = resample(&audio, CANONICAL_RATE);
            idx.iter()
                .map(|&i| {
                    let r = &records[i];
                    let c = slice_clip(&audio, r.start, r.end, context)
                        .with_context(|| format!("token {}", r.token_id))?;
                    Ok((i, c.clip))
                })
                .collect()
        })
        .collect::<anyhow::Result<_>>()?;
    let mut out: Vec<Option<AudioClip<f32>>> = vec![None; records.len()];
    for (i, c) in cut.into_iter().flatten() {
        out[i] = Some(c);
    }
    Ok(out.into_iter().map(|c| c.expect("every record belongs to one file")).collect())
}
