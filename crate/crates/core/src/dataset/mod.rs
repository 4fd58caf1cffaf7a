//! Manifests and the sampling schemes applied to them.

mod manifest;
mod sampling;

pub use manifest::{Manifest, SCHEMA_VERSION};
pub use sampling::{
    annotation_quota, annotation_sample, build_ladder, largest_remainder, sample_balanced, split_train_test,
    stratified_validation, validation_allocation, SubsetLadder, DEFAULT_LADDER,
};

use thiserror::Error;

use crate::token::Voicing;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate token_id {0:?}")]
    DuplicateId(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("manifest has no header line")]
    MissingHeader,
    #[error("unsupported manifest schema version {0}")]
    SchemaVersion(u32),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("requested {requested} tokens per voicing class, available: {available:?}")]
    InsufficientClass { requested: usize, available: Vec<(Voicing, usize)> },
    #[error("cannot select {n_total} validation tokens with at least {min_per_corpus} per corpus; corpus sizes: {corpus_sizes:?}")]
    InfeasibleValidation { n_total: usize, min_per_corpus: usize, corpus_sizes: Vec<(String, usize)> },
    #[error("ladder needs {largest} tokens but the manifest has {available}")]
    LadderTooLarge { largest: usize, available: usize },
    #[error("{0}")]
    InvalidParameter(String),
}
