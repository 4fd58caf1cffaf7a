//! Phone inventory and phonological voicing configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::token::Voicing;

#[derive(Debug, Error)]
pub enum VoicingConfigError {
    #[error("reading voicing map {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing voicing map: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("phone {0:?} listed as both voiced and voiceless")]
    Conflict(String),
    #[error("voicing map lists no stops")]
    Empty,
}

#[derive(Debug, Deserialize)]
struct VoicingFile {
    voiced: Vec<String>,
    voiceless: Vec<String>,
}

/// Which phone labels count as stops, and their voicing.
///
/// Loaded from a TOML file of the form
///
/// ```toml
/// voiced = ["b", "d", "g"]
/// voiceless = ["p", "t", "k"]
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VoicingMap {
    phones: BTreeMap<String, Voicing>,
}

impl Default for VoicingMap {
    fn default() -> Self {
        Self::from_lists(["b", "d", "g", "ɡ"], ["p", "t", "k"]).expect("default map is consistent")
    }
}

impl VoicingMap {
    pub fn from_lists<I, J, S, U>(voiced: I, voiceless: J) -> Result<Self, VoicingConfigError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = U>,
        S: Into<String>,
        U: Into<String>,
    {
        let mut phones = BTreeMap::new();
        for p in voiced {
            phones.insert(p.into(), Voicing::Voiced);
        }
        for p in voiceless {
            let p = p.into();
            if phones.get(&p) == Some(&Voicing::Voiced) {
                return Err(VoicingConfigError::Conflict(p));
            }
            phones.insert(p, Voicing::Voiceless);
        }
        if phones.is_empty() {
            return Err(VoicingConfigError::Empty);
        }
        Ok(Self { phones })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, VoicingConfigError> {
        let f: VoicingFile = toml::from_str(text)?;
        Self::from_lists(f.voiced, f.voiceless)
    }

    pub fn load(path: &Path) -> Result<Self, VoicingConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| VoicingConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn voicing(&self, phone: &str) -> Option<Voicing> {
        self.phones.get(phone).copied()
    }

    pub fn is_stop(&self, phone: &str) -> bool {
        self.phones.contains_key(phone)
    }

    pub fn phones(&self) -> impl Iterator<Item = (&str, Voicing)> {
        self.phones.iter().map(|(p, v)| (p.as_str(), *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inventory() {
        let m = VoicingMap::default();
        assert_eq!(m.voicing("g"), Some(Voicing::Voiced));
        assert_eq!(m.voicing("ɡ"), Some(Voicing::Voiced));
        assert_eq!(m.voicing("k"), Some(Voicing::Voiceless));
        assert_eq!(m.voicing("a"), None);
    }

    #[test]
    fn toml_config_and_conflicts() {
        let m = VoicingMap::from_toml_str("voiced = [\"B\", \"D\"]\nvoiceless = [\"P\"]\n").unwrap();
        assert_eq!(m.voicing("D"), Some(Voicing::Voiced));
        assert!(!m.is_stop("b"));
        assert!(matches!(
            VoicingMap::from_toml_str("voiced = [\"t\"]\nvoiceless = [\"t\"]\n"),
            Err(VoicingConfigError::Conflict(_))
        ));
        assert!(matches!(VoicingMap::from_toml_str("voiced = []\nvoiceless = []\n"), Err(VoicingConfigError::Empty)));
    }
}
