use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value or document violates a stated invariant.
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    /// A data file row failed validation. `row` counts data records from 1.
    #[error("{path}: row {row}: {reason}")]
    Load {
        path: String,
        row: usize,
        reason: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("width mismatch: expected {expected} features, got {got}")]
    Width { expected: usize, got: usize },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 validation, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Validation { .. } | Error::Domain(_) | Error::Width { .. } => 2,
            Error::Lookup(_)
            | Error::Load { .. }
            | Error::Data(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::SingularFit(_) | Error::Divergence(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
