//! Corpus directories: `<root>/<corpus>/<speaker>_<name>.TextGrid` with a
//! sibling `.wav` of the same stem.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::stops::{extract_stop_events, ExtractionWarning, SourceInfo, StopError};
use super::textgrid::{parse_textgrid, ParseError};
use super::voicing::VoicingMap;
use crate::audio::{read_wav, resample, slice_clip, AudioClip, AudioError, CANONICAL_RATE};
use crate::token::StopToken;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    TextGrid { path: String, source: ParseError },
    #[error("{path}: {source}")]
    Stops { path: String, source: StopError },
    #[error("{path}: {source}")]
    Audio { path: String, source: AudioError },
    #[error("{0} has no sibling .wav file")]
    MissingAudio(String),
    #[error("no TextGrid files under {0}")]
    Empty(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Recording {
    pub corpus: String,
    pub speaker: String,
    /// `{corpus}-{stem}`; prefixes the ids of the recording's tokens.
    pub recording_id: String,
    pub textgrid: PathBuf,
    pub audio: PathBuf,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ScanError + '_ {
    move |source| ScanError::Io { path: path.display().to_string(), source }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, ScanError> {
    let mut out: Vec<PathBuf> =
        std::fs::read_dir(dir).map_err(io(dir))?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>().map_err(io(dir))?;
    out.sort();
    Ok(out)
}

/// Lists recordings in a stable order. The speaker is the part of the file
/// stem before the first `_` (the whole stem when there is none).
pub fn discover(root: &Path) -> Result<Vec<Recording>, ScanError> {
    let mut out = Vec::new();
    for corpus_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let corpus = corpus_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        for tg in sorted_entries(&corpus_dir)? {
            if tg.extension().and_then(|e| e.to_str()) != Some("TextGrid") {
                continue;
            }
            let stem = tg.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let audio = tg.with_extension("wav");
            if !audio.is_file() {
                return Err(ScanError::MissingAudio(tg.display().to_string()));
            }
            let speaker = stem.split('_').next().unwrap_or(&stem).to_string();
            out.push(Recording { recording_id: format!("{corpus}-{stem}"), corpus: corpus.clone(), speaker, textgrid: tg, audio });
        }
    }
    if out.is_empty() {
        return Err(ScanError::Empty(root.display().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub tier: String,
    pub closure_marker: String,
    pub inventory: VoicingMap,
    /// Context window recorded on every token, seconds.
    pub context: f64,
}

/// Extracts every recording's stop tokens and marks those whose context
/// window runs past the audio.
pub fn extract_corpus(root: &Path, cfg: &ScanConfig) -> Result<(Vec<StopToken>, Vec<ExtractionWarning>), ScanError> {
    let mut tokens = Vec::new();
    let mut warnings = Vec::new();
    for rec in discover(root)? {
        let tg_path = rec.textgrid.display().to_string();
        let bytes = std::fs::read(&rec.textgrid).map_err(io(&rec.textgrid))?;
        let grid = parse_textgrid(&bytes).map_err(|source| ScanError::TextGrid { path: tg_path.clone(), source })?;
        let source = SourceInfo {
            corpus: rec.corpus.clone(),
            speaker: rec.speaker.clone(),
            audio_path: rec.audio.display().to_string(),
            recording_id: rec.recording_id.clone(),
        };
        let found = extract_stop_events(&grid, &cfg.tier, &cfg.inventory, &cfg.closure_marker, &source)
            .map_err(|source| ScanError::Stops { path: tg_path.clone(), source })?;
        let audio_err = |source| ScanError::Audio { path: rec.audio.display().to_string(), source };
        let audio: AudioClip<f32> = read_wav(&rec.audio).map_err(audio_err)?;
        let audio = resample(&audio, CANONICAL_RATE);
        for mut t in found.tokens {
            let cut = slice_clip(&audio, t.start, t.end, cfg.context).map_err(audio_err)?;
            t.context = Some(cfg.context);
            t.clamped = cut.clamped;
            tokens.push(t);
        }
        warnings.extend(found.warnings);
    }
    Ok((tokens, warnings))
}
