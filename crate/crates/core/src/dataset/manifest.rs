use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::token::{Burst, StopToken};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    provenance: String,
}

/// An ordered collection of stop tokens, serialized as JSON Lines with one
/// header line carrying the schema version and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<StopToken>,
    pub provenance: String,
    pub schema_version: u32,
}

impl Manifest {
    pub fn new(records: Vec<StopToken>, provenance: impl Into<String>) -> Result<Self, DatasetError> {
        let m = Self { records, provenance: provenance.into(), schema_version: SCHEMA_VERSION };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            if !seen.insert(r.token_id.as_str()) {
                return Err(DatasetError::DuplicateId(r.token_id.clone()));
            }
            r.check().map_err(DatasetError::InvalidRecord)?;
        }
        Ok(())
    }

    pub fn get(&self, token_id: &str) -> Option<&StopToken> {
        self.records.iter().find(|r| r.token_id == token_id)
    }

    /// Records usable as training or evaluation targets: binary label and
    /// not excluded upstream. Unknown and unsure labels are dropped.
    pub fn training_view(&self) -> Manifest {
        self.filtered(|r| r.burst.as_binary().is_some() && !r.excluded, "training_view")
    }

    /// Keeps records matching `keep`, in order.
    pub fn filtered(&self, keep: impl Fn(&StopToken) -> bool, what: &str) -> Manifest {
        Manifest {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            provenance: format!("{what} <- {}", self.provenance),
            schema_version: self.schema_version,
        }
    }

    /// Records whose ids are in `ids`, in manifest order.
    pub fn subset(&self, ids: &[String], what: &str) -> Manifest {
        let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
        self.filtered(|r| wanted.contains(r.token_id.as_str()), what)
    }

    pub fn count_label(&self, label: Burst) -> usize {
        self.records.iter().filter(|r| r.burst == label).count()
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header { schema_version: self.schema_version, provenance: self.provenance.clone() };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(DatasetError::MissingHeader)?;
        let header: Header = serde_json::from_str(first).map_err(|_| DatasetError::MissingHeader)?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(DatasetError::SchemaVersion(header.schema_version));
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let r: StopToken =
                serde_json::from_str(line).map_err(|e| DatasetError::Record { line: i + 1, message: e.to_string() })?;
            records.push(r);
        }
        let m = Self { records, provenance: header.provenance, schema_version: header.schema_version };
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Self::from_jsonl(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_jsonl())
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::{LabelSource, Voicing};

    fn rec(id: &str) -> StopToken {
        StopToken {
            token_id: id.into(),
            corpus: "c".into(),
            speaker: "s".into(),
            audio_path: "a.wav".into(),
            phone: "t".into(),
            voicing: Voicing::Voiceless,
            start: 0.1,
            end: 0.2,
            burst: Burst::Present,
            label_source: LabelSource::Corpus,
            confidence: None,
            context: None,
            clamped: false,
            excluded: false,
        }
    }

    #[test]
    fn jsonl_roundtrip_and_field_names() {
        let mut r = rec("a");
        r.clamped = true;
        let m = Manifest::new(vec![r, rec("b")], "test").unwrap();
        let text = m.to_jsonl();
        let first_record = text.lines().nth(1).unwrap();
        for key in [
            "token_id", "corpus", "speaker", "audio_path", "phone", "voicing", "start", "end", "burst",
            "label_source", "confidence",
        ] {
            assert!(first_record.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert!(first_record.contains("\"clamped\":true"));
        assert!(!text.lines().nth(2).unwrap().contains("clamped"));
        assert_eq!(Manifest::from_jsonl(&text).unwrap(), m);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(matches!(Manifest::new(vec![rec("a"), rec("a")], ""), Err(DatasetError::DuplicateId(_))));
    }

    #[test]
    fn bad_record_reports_line() {
        let m = Manifest::new(vec![rec("a")], "p").unwrap();
        let text = m.to_jsonl() + "{\"token_id\": 3}\n";
        assert!(matches!(Manifest::from_jsonl(&text), Err(DatasetError::Record { line: 3, .. })));
    }

    #[test]
    fn training_view_drops_unlabeled_and_excluded() {
        let mut u = rec("u");
        u.burst = Burst::Unsure;
        let mut x = rec("x");
        x.excluded = true;
        let mut k = rec("k");
        k.burst = Burst::Unknown;
        let m = Manifest::new(vec![rec("a"), u, x, k], "").unwrap();
        let ids: Vec<_> = m.training_view().records.into_iter().map(|r| r.token_id).collect();
        assert_eq!(ids, ["a"]);
    }
}
