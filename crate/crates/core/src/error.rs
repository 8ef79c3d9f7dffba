use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("position plan is not a permutation: {0}")]
    NotAPermutation(String),

    #[error("key index {index} out of range 1..={positions}")]
    KeyOutOfRange { index: usize, positions: usize },

    #[error("candidate {0} is the target itself")]
    SelfCandidate(String),

    #[error("malformed graymap header: {0}")]
    PgmHeader(String),

    #[error("truncated graymap payload: expected {expected} bytes, found {found}")]
    PgmTruncated { expected: usize, found: usize },

    #[error("unsupported maxval {0}")]
    PgmMaxval(u32),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by the caller's configuration rather than by
    /// the run itself. The CLI maps these to exit code 1.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidArgument(_) | Error::KeyOutOfRange { .. } | Error::Json(_)
        )
    }
}
