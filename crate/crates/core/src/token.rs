//! The stop token record exchanged between every pipeline stage.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voicing {
    Voiced,
    Voiceless,
}

impl Voicing {
    pub const ALL: [Voicing; 2] = [Voicing::Voiced, Voicing::Voiceless];

    pub fn as_str(self) -> &'static str {
        match self {
            Voicing::Voiced => "voiced",
            Voicing::Voiceless => "voiceless",
        }
    }
}

impl std::fmt::Display for Voicing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Voicing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "voiced" => Ok(Voicing::Voiced),
            "voiceless" => Ok(Voicing::Voiceless),
            other => Err(format!("unknown voicing {other:?}")),
        }
    }
}

/// Burst label. `Unsure` is only produced by human annotators and never
/// enters training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Burst {
    Present,
    Absent,
    Unknown,
    Unsure,
}

impl Burst {
    pub fn as_str(self) -> &'static str {
        match self {
            Burst::Present => "present",
            Burst::Absent => "absent",
            Burst::Unknown => "unknown",
            Burst::Unsure => "unsure",
        }
    }

    /// `Some(true)` for present, `Some(false)` for absent, `None` otherwise.
    pub fn as_binary(self) -> Option<bool> {
        match self {
            Burst::Present => Some(true),
            Burst::Absent => Some(false),
            Burst::Unknown | Burst::Unsure => None,
        }
    }

    pub fn from_binary(present: bool) -> Self {
        if present {
            Burst::Present
        } else {
            Burst::Absent
        }
    }
}

impl std::fmt::Display for Burst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Burst {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "present" => Ok(Burst::Present),
            "absent" => Ok(Burst::Absent),
            "unknown" => Ok(Burst::Unknown),
            "unsure" => Ok(Burst::Unsure),
            other => Err(format!("unknown burst label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Manual,
    Model,
    Corpus,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One stop event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopToken {
    pub token_id: String,
    pub corpus: String,
    pub speaker: String,
    pub audio_path: String,
    pub phone: String,
    pub voicing: Voicing,
    /// Stop onset in seconds, closure included.
    pub start: f64,
    pub end: f64,
    pub burst: Burst,
    pub label_source: LabelSource,
    pub confidence: Option<f64>,
    /// Context window (seconds) used when the token's audio was extracted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<f64>,
    /// The context window was cut at a file boundary.
    #[serde(default, skip_serializing_if = "is_false")]
    pub clamped: bool,
    /// Excluded upstream (e.g. adjacent to a devoiced vowel).
    #[serde(default, skip_serializing_if = "is_false")]
    pub excluded: bool,
}

impl StopToken {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Checks the record-level invariants.
    pub fn check(&self) -> Result<(), String> {
        if !(self.start < self.end) {
            return Err(format!("token {}: start {} >= end {}", self.token_id, self.start, self.end));
        }
        match (self.label_source, self.confidence) {
            (LabelSource::Model, None) => {
                return Err(format!("token {}: model label without confidence", self.token_id))
            }
            (LabelSource::Model, Some(c)) if !(0.0..=1.0).contains(&c) => {
                return Err(format!("token {}: confidence {c} outside [0,1]", self.token_id))
            }
            (LabelSource::Manual | LabelSource::Corpus, Some(_)) => {
                return Err(format!("token {}: confidence on a non-model label", self.token_id))
            }
            _ => {}
        }
        Ok(())
    }
}
