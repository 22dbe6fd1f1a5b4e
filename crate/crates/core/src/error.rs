use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: domain error, {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("{op}: degenerate input, {detail}")]
    Degenerate { op: &'static str, detail: String },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("tape has already been consumed by backward()")]
    TapeSpent,

    #[error("backward() requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("variable belongs to a different tape")]
    ForeignVar,

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {detail}")]
    Parse { file: String, line: usize, detail: String },

    #[error("{what} id {id} out of range (limit {limit})")]
    IdOutOfRange { what: &'static str, id: u64, limit: u64 },

    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),

    #[error("dataset is already augmented with inverse relations")]
    AlreadyAugmented,

    #[error("dataset must be augmented with inverse relations first")]
    NotAugmented,

    #[error("invalid seed entity {seed} (entity count {entities})")]
    InvalidSeed { seed: u32, entities: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at timestamp {timestamp}: tkg={tkg} hie={hie} cl={cl}")]
    NumericalAbort {
        timestamp: usize,
        tkg: f64,
        hie: f64,
        cl: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn degenerate(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Degenerate {
            op,
            detail: detail.into(),
        }
    }

    /// True for errors caused by malformed or inconsistent input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingFile(_)
                | Error::Parse { .. }
                | Error::IdOutOfRange { .. }
                | Error::EmptySplit(_)
                | Error::InvalidSeed { .. }
                | Error::Checkpoint(_)
                | Error::Io(_)
        )
    }

    /// True for errors caused by NaN/Inf during training.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalAbort { .. } | Error::NonFinite { .. })
    }
}
