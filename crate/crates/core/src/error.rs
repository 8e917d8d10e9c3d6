use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: unknown label token {token:?}")]
    UnknownLabel { line: usize, token: String },

    #[error("line {line}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        line: usize,
        column: usize,
        value: String,
    },

    #[error("line {line}, column {column}: non-finite value")]
    NonFinite { line: usize, column: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("truncation order {requested} exceeds numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("completeness violated at level {level}: M + sum(M_l) = {found}, expected {expected}")]
    Completeness {
        level: usize,
        expected: usize,
        found: usize,
    },

    #[error("training data must contain both classes")]
    SingleClass,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incompatible input: {0}")]
    Incompatible(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a runtime or
    /// numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Numerical(_) | Error::RankDeficient { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
