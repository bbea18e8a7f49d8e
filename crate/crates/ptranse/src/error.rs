//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed triple line (expected 3 tab-separated fields, got {fields})")]
    MalformedTriple {
        path: PathBuf,
        line: usize,
        fields: usize,
    },

    #[error("{path}:{line}: {msg}")]
    MalformedFile {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("reverse relations already materialized (relation vocabulary holds {n} names)")]
    AlreadyAugmented { n: usize },

    #[error("relation {relation} has no training triples")]
    EmptyRelation { relation: usize },

    #[error("embedding dimension must be positive")]
    ZeroDim,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("negative sampling saturated after {attempts} attempts for slot {slot}")]
    NegativeSaturated { attempts: usize, slot: String },

    #[error("NaN detected in {what} during epoch {epoch}")]
    NumericNan { what: String, epoch: usize },

    #[error("unknown entity '{0}' in query")]
    UnknownEntity(String),

    #[error("test split is empty")]
    EmptyTestSplit,

    #[error("missing artifact: {what} — run `ptranse {command}` first")]
    MissingArtifact { what: String, command: String },

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
