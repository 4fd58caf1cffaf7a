//! Durable label storage: a manifest snapshot plus a write-ahead log.
//!
//! Every label is appended to `labels.jsonl` and synced before the caller
//! sees an acknowledgement. `manifest.jsonl` is rewritten (via a temporary
//! file and rename) every [`SNAPSHOT_EVERY`] labels and on [`Store::snapshot`].
//! Opening replays the whole log onto the snapshot; replay is idempotent,
//! so a crash between the two writes loses nothing.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use burstkit::dataset::{DatasetError, Manifest};
use burstkit::token::{Burst, LabelSource};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const LOG_FILE: &str = "labels.jsonl";
pub const SNAPSHOT_EVERY: usize = 100;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Manifest(#[from] DatasetError),
    #[error("{path} line {line}: {message}")]
    Log { path: String, line: usize, message: String },
    #[error("store {0} has no manifest and none was supplied")]
    Missing(String),
    #[error("label log refers to unknown token {0}")]
    UnknownToken(String),
}

/// One accepted label, as written to the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub seq: u64,
    pub session: String,
    pub token_id: String,
    pub label: Burst,
    pub annotator: String,
    /// The manual label this one replaced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous: Option<Burst>,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    manifest: Manifest,
    index: BTreeMap<String, usize>,
    log: File,
    events: Vec<LabelEvent>,
    since_snapshot: usize,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

impl Store {
    /// Opens `dir`, seeding it with `initial` when it holds no manifest yet.
    pub fn open(dir: &Path, initial: Option<&Manifest>) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mpath = dir.join(MANIFEST_FILE);
        let manifest = if mpath.is_file() {
            Manifest::read(&mpath)?
        } else {
            let m = initial.ok_or_else(|| StoreError::Missing(dir.display().to_string()))?.clone();
            write_atomic(&mpath, &m.to_jsonl())?;
            m
        };
        let index = manifest.records.iter().enumerate().map(|(i, r)| (r.token_id.clone(), i)).collect();
        let lpath = dir.join(LOG_FILE);
        let events = read_log(&lpath)?;
        let log = OpenOptions::new().create(true).append(true).open(&lpath).map_err(io(&lpath))?;
        // cut a torn tail so the next append starts on a fresh line
        let bytes = std::fs::read(&lpath).map_err(io(&lpath))?;
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        if keep != bytes.len() {
            log.set_len(keep as u64).map_err(io(&lpath))?;
        }
        let mut store = Self { dir: dir.to_path_buf(), manifest, index, log, events: Vec::new(), since_snapshot: 0 };
        for e in events {
            store.apply_in_memory(&e)?;
            store.events.push(e);
        }
        Ok(store)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn events(&self) -> &[LabelEvent] {
        &self.events
    }

    pub fn position(&self, token_id: &str) -> Option<usize> {
        self.index.get(token_id).copied()
    }

    pub fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    fn apply_in_memory(&mut self, e: &LabelEvent) -> Result<(), StoreError> {
        let i = self.position(&e.token_id).ok_or_else(|| StoreError::UnknownToken(e.token_id.clone()))?;
        let r = &mut self.manifest.records[i];
        r.burst = e.label;
        r.label_source = LabelSource::Manual;
        r.confidence = None;
        Ok(())
    }

    /// Logs `e` durably, then applies it.
    pub fn record(&mut self, e: LabelEvent) -> Result<(), StoreError> {
        if self.position(&e.token_id).is_none() {
            return Err(StoreError::UnknownToken(e.token_id));
        }
        let mut line = serde_json::to_string(&e).expect("event serializes");
        line.push('\n');
        let lpath = self.dir.join(LOG_FILE);
        self.log.write_all(line.as_bytes()).map_err(io(&lpath))?;
        self.log.sync_data().map_err(io(&lpath))?;
        self.apply_in_memory(&e)?;
        self.events.push(e);
        self.since_snapshot += 1;
        if self.since_snapshot >= SNAPSHOT_EVERY {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Rewrites the manifest file from memory.
    pub fn snapshot(&mut self) -> Result<(), StoreError> {
        write_atomic(&self.dir.join(MANIFEST_FILE), &self.manifest.to_jsonl())?;
        self.since_snapshot = 0;
        Ok(())
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<(), StoreError> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut f = File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(text.as_bytes()).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))
}

/// Reads the complete lines of the log. Anything after the last newline
/// is a torn append from a crash and is ignored (and later truncated).
fn read_log(path: &Path) -> Result<Vec<LabelEvent>, StoreError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StoreError::Io { path: path.display().to_string(), source: e }),
    };
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let bad = |line: usize, message: String| StoreError::Log { path: path.display().to_string(), line, message };
    let text = std::str::from_utf8(&bytes[..keep]).map_err(|e| bad(0, e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(i + 1, e.to_string())))
        .collect()
}
