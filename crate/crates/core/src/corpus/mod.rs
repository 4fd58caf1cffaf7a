//! TextGrid I/O and stop-token derivation.

pub mod scan;
pub mod stops;
pub mod textgrid;
pub mod voicing;

pub use scan::{discover, extract_corpus, Recording, ScanConfig, ScanError};
pub use stops::{
    classify_label, emit_annotated_textgrid, extract_stop_events, Extraction, ExtractionWarning, LabelKind,
    SourceInfo, StopError, WarningKind, BURST_TIER, DEFAULT_CLOSURE_MARKER,
};
pub use textgrid::{
    decode_text, parse_textgrid, parse_textgrid_str, serialize_textgrid, Interval, IntervalFault, IntervalTier,
    ParseError, TextGrid, ValidationError,
};
pub use voicing::{VoicingConfigError, VoicingMap};
