//! Synthetic aligned corpora for tests and demos: WAV recordings with
//! TextGrids that follow the closure-label conventions.
//!
//! Each recording strings together synthesized vowel–stop–vowel clips. A
//! full stop is labelled as separate `<cl>` and phone intervals, a lenited
//! one with the combined `<cl>,phone` label, and a share of stops are left
//! bare as a forced aligner would. The chance of a full stop grows with
//! closure duration and is lower for voiced stops, so the corpus has a
//! duration effect for the analysis to find.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{synthesize_stop_with_layout, write_wav_pcm16, AudioClip, AudioError, Realization, SynthSpec, CANONICAL_RATE};
use crate::corpus::{serialize_textgrid, Interval, IntervalTier, TextGrid, DEFAULT_CLOSURE_MARKER};
use crate::numeric::sigmoid;
use crate::rng;
use crate::token::{Burst, Voicing};

pub const PHONE_TIER: &str = "phones";
pub const WORD_TIER: &str = "words";

const VOICED: [&str; 3] = ["b", "d", "g"];
const VOICELESS: [&str; 3] = ["p", "t", "k"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub corpora: Vec<String>,
    pub speakers_per_corpus: usize,
    pub recordings_per_speaker: usize,
    pub stops_per_recording: usize,
    pub snr_db: f64,
    /// Share of stops written as a bare phone (burst unknown).
    pub bare_fraction: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            corpora: vec!["alpha".into(), "beta".into()],
            speakers_per_corpus: 2,
            recordings_per_speaker: 2,
            stops_per_recording: 20,
            snr_db: 25.0,
            bare_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// What the generator put into one stop slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedStop {
    pub phone: String,
    pub voicing: Voicing,
    pub start: f64,
    pub end: f64,
    /// The label a reader of the TextGrid should derive.
    pub burst: Burst,
    /// The acoustic truth, known even for bare stops.
    pub realization: Realization,
}

#[derive(Debug, Clone)]
pub struct FixtureRecording {
    pub audio: AudioClip<f32>,
    pub grid: TextGrid,
    pub stops: Vec<PlantedStop>,
}

/// P(full stop) for a closure of `closure_s` seconds.
pub fn full_stop_probability(closure_s: f64, voicing: Voicing) -> f64 {
    let shift = if voicing == Voicing::Voiced { -0.6 } else { 0.0 };
    sigmoid(1.4 * (closure_s.ln() + 3.2) + 0.4 + shift)
}

fn seconds(samples: usize) -> f64 {
    samples as f64 / CANONICAL_RATE as f64
}

/// Builds one recording. With `clip_start` the first clip's leading vowel is
/// cut to 1 ms, so a context window around its stop runs off the file.
pub fn fixture_recording(cfg: &FixtureConfig, key: &str, clip_start: bool) -> Result<FixtureRecording, FixtureError> {
    let seed = rng::fnv1a(key) ^ cfg.seed;
    let mut r = rng::stream(seed, "fixture-recording");
    let mut samples: Vec<f32> = Vec::new();
    let mut phones: Vec<Interval> = Vec::new();
    let mut words: Vec<Interval> = Vec::new();
    let mut stops = Vec::new();
    for k in 0..cfg.stops_per_recording {
        let voicing = if r.gen_bool(0.5) { Voicing::Voiced } else { Voicing::Voiceless };
        let phone = match voicing {
            Voicing::Voiced => VOICED[r.gen_range(0..3)],
            Voicing::Voiceless => VOICELESS[r.gen_range(0..3)],
        };
        let mut spec = SynthSpec::sample(Realization::FullStop, cfg.snr_db, r.gen());
        let full = r.gen_bool(full_stop_probability(spec.closure_ms / 1000.0, voicing));
        spec.realization = match (full, r.gen_bool(0.5)) {
            (true, _) => Realization::FullStop,
            (false, true) => Realization::Fricativised,
            (false, false) => Realization::VoicedContinuant,
        };
        let bare = r.gen_bool(cfg.bare_fraction);
        let (clip, burst, layout) = synthesize_stop_with_layout::<f32>(&spec)?;
        let skip = if clip_start && k == 0 { layout.stop_start - CANONICAL_RATE as usize / 1000 } else { 0 };
        let base = samples.len();
        let at = |i: usize| seconds(base + i - skip);
        samples.extend_from_slice(&clip.samples()[skip..]);
        let end = at(clip.len());
        phones.push(Interval::new(at(skip), at(layout.stop_start), "a"));
        if bare {
            phones.push(Interval::new(at(layout.stop_start), at(layout.stop_end), phone));
        } else if burst == Burst::Present {
            phones.push(Interval::new(at(layout.stop_start), at(layout.release), DEFAULT_CLOSURE_MARKER));
            phones.push(Interval::new(at(layout.release), at(layout.stop_end), phone));
        } else {
            phones.push(Interval::new(at(layout.stop_start), at(layout.stop_end), format!("{DEFAULT_CLOSURE_MARKER},{phone}")));
        }
        phones.push(Interval::new(at(layout.stop_end), end, "o"));
        words.push(Interval::new(at(skip), end, format!("a{phone}o")));
        stops.push(PlantedStop {
            phone: phone.to_string(),
            voicing,
            start: at(layout.stop_start),
            end: at(layout.stop_end),
            burst: if bare { Burst::Unknown } else { burst },
            realization: spec.realization,
        });
    }
    let xmax = seconds(samples.len());
    let grid = TextGrid {
        xmin: 0.0,
        xmax,
        tiers: vec![IntervalTier::new(PHONE_TIER, 0.0, xmax, phones), IntervalTier::new(WORD_TIER, 0.0, xmax, words)],
    };
    Ok(FixtureRecording { audio: AudioClip::new(samples, CANONICAL_RATE)?, grid, stops })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureSummary {
    pub recordings: usize,
    pub stops: usize,
    pub present: usize,
    pub absent: usize,
    pub unknown: usize,
}

/// Writes `<dir>/<corpus>/<speaker>_<nn>.{wav,TextGrid}`. The first
/// recording of every corpus starts right at a stop.
pub fn write_fixture_corpus(dir: &Path, cfg: &FixtureConfig) -> Result<FixtureSummary, FixtureError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| FixtureError::Io { path, source }
    };
    let mut summary = FixtureSummary::default();
    for corpus in &cfg.corpora {
        let cdir = dir.join(corpus);
        std::fs::create_dir_all(&cdir).map_err(io(&cdir))?;
        for s in 0..cfg.speakers_per_corpus {
            for n in 0..cfg.recordings_per_speaker {
                let stem = format!("s{s:02}_{n:02}");
                let rec = fixture_recording(cfg, &format!("{corpus}/{stem}"), s == 0 && n == 0)?;
                write_wav_pcm16(&cdir.join(format!("{stem}.wav")), &rec.audio)?;
                let tg = cdir.join(format!("{stem}.TextGrid"));
                let text = serialize_textgrid(&rec.grid).expect("generated grids are valid");
                std::fs::write(&tg, text).map_err(io(&tg))?;
                summary.recordings += 1;
                for st in &rec.stops {
                    summary.stops += 1;
                    match st.burst {
                        Burst::Present => summary.present += 1,
                        Burst::Absent => summary.absent += 1,
                        _ => summary.unknown += 1,
                    }
                }
            }
        }
    }
    Ok(summary)
}
