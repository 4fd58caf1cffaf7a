//! Stop tokens from phone tiers, and burst tiers back into TextGrids.
//!
//! Closure-label conventions:
//! * a standalone closure interval (`<cl>`) directly followed by a stop
//!   phone: separate closure and release, burst present;
//! * a combined label (`<cl>,g`): no separable release, burst absent;
//! * a bare stop phone: the corpus carries no burst information (forced
//!   alignment output), burst unknown.

use thiserror::Error;

use super::textgrid::{Interval, IntervalTier, TextGrid, TIME_TOLERANCE};
use super::voicing::VoicingMap;
use crate::token::{Burst, LabelSource, StopToken};

pub const DEFAULT_CLOSURE_MARKER: &str = "<cl>";
pub const BURST_TIER: &str = "burst";

/// Provenance attached to every token extracted from one recording.
#[derive(Debug, Clone, Default)]
pub struct SourceInfo {
    pub corpus: String,
    pub speaker: String,
    pub audio_path: String,
    /// Prefix for token ids; ids are `{recording_id}-{n:05}`.
    pub recording_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarningKind {
    /// Closure mark at the end of the tier.
    DanglingClosure,
    /// Closure mark followed by something other than a stop phone.
    ClosureWithoutStop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionWarning {
    pub tier: String,
    /// 0-based interval index of the closure mark.
    pub interval: usize,
    pub time: f64,
    pub kind: WarningKind,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub tokens: Vec<StopToken>,
    pub warnings: Vec<ExtractionWarning>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StopError {
    #[error("tier {0:?} not found")]
    MissingTier(String),
    #[error("stop inventory is empty")]
    EmptyInventory,
    #[error("tokens overlap: {}", .0.join(", "))]
    Overlap(Vec<String>),
    #[error("token {id} span [{start}, {end}] lies outside the TextGrid")]
    OutOfRange { id: String, start: f64, end: f64 },
}

/// How a single interval label reads under the closure convention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelKind<'a> {
    Closure,
    Combined(&'a str),
    Stop(&'a str),
    Other,
}

pub fn classify_label<'a>(label: &'a str, inventory: &VoicingMap, closure_marker: &str) -> LabelKind<'a> {
    let label = label.trim();
    if label == closure_marker {
        return LabelKind::Closure;
    }
    if let Some((head, tail)) = label.split_once(',') {
        let (head, tail) = (head.trim(), tail.trim());
        if head == closure_marker && inventory.is_stop(tail) {
            return LabelKind::Combined(tail);
        }
        return LabelKind::Other;
    }
    if inventory.is_stop(label) {
        LabelKind::Stop(label)
    } else {
        LabelKind::Other
    }
}

/// Scans `tier_name` for stop events.
pub fn extract_stop_events(
    grid: &TextGrid,
    tier_name: &str,
    inventory: &VoicingMap,
    closure_marker: &str,
    source: &SourceInfo,
) -> Result<Extraction, StopError> {
    let tier = grid.tier(tier_name).ok_or_else(|| StopError::MissingTier(tier_name.to_string()))?;
    if inventory.phones().next().is_none() {
        return Err(StopError::EmptyInventory);
    }
    let ivs = &tier.intervals;
    let mut out = Extraction::default();
    let push = |phone: &str, start: f64, end: f64, burst: Burst, tokens: &mut Vec<StopToken>| {
        let voicing = inventory.voicing(phone).expect("classified phones are in the inventory");
        tokens.push(StopToken {
            token_id: format!("{}-{:05}", source.recording_id, tokens.len()),
            corpus: source.corpus.clone(),
            speaker: source.speaker.clone(),
            audio_path: source.audio_path.clone(),
            phone: phone.to_string(),
            voicing,
            start,
            end,
            burst,
            label_source: LabelSource::Corpus,
            confidence: None,
            context: None,
            clamped: false,
            excluded: false,
        });
    };
    let mut i = 0;
    while i < ivs.len() {
        let iv = &ivs[i];
        match classify_label(&iv.text, inventory, closure_marker) {
            LabelKind::Closure => {
                let next = ivs.get(i + 1).map(|n| (n, classify_label(&n.text, inventory, closure_marker)));
                match next {
                    Some((n, LabelKind::Stop(phone))) => {
                        push(phone, iv.xmin, n.xmax, Burst::Present, &mut out.tokens);
                        i += 2;
                        continue;
                    }
                    Some(_) => out.warnings.push(ExtractionWarning {
                        tier: tier.name.clone(),
                        interval: i,
                        time: iv.xmin,
                        kind: WarningKind::ClosureWithoutStop,
                    }),
                    None => out.warnings.push(ExtractionWarning {
                        tier: tier.name.clone(),
                        interval: i,
                        time: iv.xmin,
                        kind: WarningKind::DanglingClosure,
                    }),
                }
            }
            LabelKind::Combined(phone) => push(phone, iv.xmin, iv.xmax, Burst::Absent, &mut out.tokens),
            LabelKind::Stop(phone) => push(phone, iv.xmin, iv.xmax, Burst::Unknown, &mut out.tokens),
            LabelKind::Other => {}
        }
        i += 1;
    }
    Ok(out)
}

/// Adds (or replaces) a `burst` tier with one interval per token, labelled
/// with its burst value, and empty intervals filling the gaps.
pub fn emit_annotated_textgrid(grid: &TextGrid, tokens: &[StopToken]) -> Result<TextGrid, StopError> {
    let mut sorted: Vec<&StopToken> = tokens.iter().collect();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start).then_with(|| a.token_id.cmp(&b.token_id)));
    for t in &sorted {
        if t.start < grid.xmin - TIME_TOLERANCE || t.end > grid.xmax + TIME_TOLERANCE || !(t.start < t.end) {
            return Err(StopError::OutOfRange { id: t.token_id.clone(), start: t.start, end: t.end });
        }
    }
    let colliding: Vec<String> = sorted
        .windows(2)
        .filter(|w| w[1].start < w[0].end - TIME_TOLERANCE)
        .flat_map(|w| [w[0].token_id.clone(), w[1].token_id.clone()])
        .fold(Vec::new(), |mut acc, id| {
            if !acc.contains(&id) {
                acc.push(id);
            }
            acc
        });
    if !colliding.is_empty() {
        return Err(StopError::Overlap(colliding));
    }

    let mut intervals = Vec::with_capacity(2 * sorted.len() + 1);
    let mut cursor = grid.xmin;
    for t in sorted {
        let start = t.start.max(grid.xmin);
        let end = t.end.min(grid.xmax);
        if start > cursor + TIME_TOLERANCE {
            intervals.push(Interval::new(cursor, start, ""));
            cursor = start;
        }
        // snap to the cursor so the tier stays exactly contiguous
        intervals.push(Interval::new(cursor, end, t.burst.as_str()));
        cursor = end;
    }
    if cursor < grid.xmax - TIME_TOLERANCE {
        intervals.push(Interval::new(cursor, grid.xmax, ""));
    } else if let Some(last) = intervals.last_mut() {
        last.xmax = grid.xmax;
    }
    if intervals.is_empty() {
        intervals.push(Interval::new(grid.xmin, grid.xmax, ""));
    }

    let mut out = grid.clone();
    out.tiers.retain(|t| t.name != BURST_TIER);
    out.tiers.push(IntervalTier::new(BURST_TIER, grid.xmin, grid.xmax, intervals));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::Voicing;

    fn tier_grid(intervals: Vec<Interval>) -> TextGrid {
        let xmin = intervals.first().unwrap().xmin;
        let xmax = intervals.last().unwrap().xmax;
        TextGrid { xmin, xmax, tiers: vec![IntervalTier::new("phones", xmin, xmax, intervals)] }
    }

    fn extract(grid: &TextGrid) -> Extraction {
        let src = SourceInfo { recording_id: "r".into(), ..Default::default() };
        extract_stop_events(grid, "phones", &VoicingMap::default(), DEFAULT_CLOSURE_MARKER, &src).unwrap()
    }

    #[test]
    fn separate_closure_means_burst_present() {
        let g = tier_grid(vec![
            Interval::new(0.9, 1.0, "a"),
            Interval::new(1.0, 1.05, "<cl>"),
            Interval::new(1.05, 1.08, "g"),
            Interval::new(1.08, 1.2, "o"),
        ]);
        let ex = extract(&g);
        assert_eq!(ex.tokens.len(), 1);
        let t = &ex.tokens[0];
        assert_eq!((t.start, t.end), (1.0, 1.08));
        assert_eq!(t.phone, "g");
        assert_eq!(t.voicing, Voicing::Voiced);
        assert_eq!(t.burst, Burst::Present);
        assert_eq!(t.label_source, LabelSource::Corpus);
    }

    #[test]
    fn combined_label_means_burst_absent() {
        let g = tier_grid(vec![
            Interval::new(1.9, 2.0, "a"),
            Interval::new(2.0, 2.06, "<cl>,g"),
            Interval::new(2.06, 2.2, "a"),
        ]);
        let ex = extract(&g);
        assert_eq!(ex.tokens.len(), 1);
        assert_eq!((ex.tokens[0].start, ex.tokens[0].end), (2.0, 2.06));
        assert_eq!(ex.tokens[0].burst, Burst::Absent);
        // whitespace around the separator is tolerated
        let g = tier_grid(vec![Interval::new(0.0, 0.1, " <cl> , k ")]);
        assert_eq!(extract(&g).tokens[0].phone, "k");
    }

    #[test]
    fn bare_stop_is_unknown() {
        let g = tier_grid(vec![
            Interval::new(2.9, 3.0, "a"),
            Interval::new(3.0, 3.07, "t"),
            Interval::new(3.07, 3.2, "o"),
        ]);
        let ex = extract(&g);
        assert_eq!(ex.tokens.len(), 1);
        assert_eq!(ex.tokens[0].burst, Burst::Unknown);
        assert_eq!(ex.tokens[0].voicing, Voicing::Voiceless);
    }

    #[test]
    fn dangling_closure_warns_without_token() {
        let g = tier_grid(vec![Interval::new(0.0, 0.5, "a"), Interval::new(0.5, 0.6, "<cl>")]);
        let ex = extract(&g);
        assert!(ex.tokens.is_empty());
        assert_eq!(ex.warnings.len(), 1);
        assert_eq!(ex.warnings[0].kind, WarningKind::DanglingClosure);
        assert_eq!(ex.warnings[0].interval, 1);

        let g = tier_grid(vec![Interval::new(0.0, 0.5, "<cl>"), Interval::new(0.5, 0.6, "a")]);
        let ex = extract(&g);
        assert!(ex.tokens.is_empty());
        assert_eq!(ex.warnings[0].kind, WarningKind::ClosureWithoutStop);
    }

    #[test]
    fn missing_tier() {
        let g = tier_grid(vec![Interval::new(0.0, 1.0, "")]);
        let src = SourceInfo::default();
        assert_eq!(
            extract_stop_events(&g, "words", &VoicingMap::default(), "<cl>", &src).unwrap_err(),
            StopError::MissingTier("words".into())
        );
    }

    fn token(id: &str, start: f64, end: f64, burst: Burst) -> StopToken {
        StopToken {
            token_id: id.into(),
            corpus: String::new(),
            speaker: String::new(),
            audio_path: String::new(),
            phone: "t".into(),
            voicing: Voicing::Voiceless,
            start,
            end,
            burst,
            label_source: LabelSource::Corpus,
            confidence: None,
            context: None,
            clamped: false,
            excluded: false,
        }
    }

    #[test]
    fn burst_tier_contiguity() {
        let g = tier_grid(vec![Interval::new(0.0, 2.0, "")]);
        let empty = emit_annotated_textgrid(&g, &[]).unwrap();
        let tier = empty.tier(BURST_TIER).unwrap();
        assert_eq!(tier.intervals, vec![Interval::new(0.0, 2.0, "")]);

        let two = emit_annotated_textgrid(
            &g,
            &[token("b", 1.2, 1.3, Burst::Absent), token("a", 0.5, 0.6, Burst::Present)],
        )
        .unwrap();
        let labels: Vec<&str> = two.tier(BURST_TIER).unwrap().intervals.iter().map(|i| i.text.as_str()).collect();
        assert_eq!(labels, ["", "present", "", "absent", ""]);
        two.validate().unwrap();

        let full = emit_annotated_textgrid(&g, &[token("a", 0.0, 2.0, Burst::Unknown)]).unwrap();
        assert_eq!(full.tier(BURST_TIER).unwrap().intervals, vec![Interval::new(0.0, 2.0, "unknown")]);
    }

    #[test]
    fn overlapping_tokens_are_named() {
        let g = tier_grid(vec![Interval::new(0.0, 2.0, "")]);
        let err = emit_annotated_textgrid(&g, &[token("x", 0.5, 0.8, Burst::Present), token("y", 0.7, 0.9, Burst::Absent)])
            .unwrap_err();
        assert_eq!(err, StopError::Overlap(vec!["x".into(), "y".into()]));
    }
}
