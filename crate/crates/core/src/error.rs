use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] numcore::Error),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dim {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{0} block has no online path")]
    NoOnlinePath(&'static str),

    #[error("online path needs causal normalization, but {0} uses gLN")]
    NonCausalNorm(&'static str),

    #[error("empty sequence")]
    EmptySequence,

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("unsupported chunk overlap: chunk length {chunk} must equal twice the hop {hop}")]
    UnsupportedOverlap { chunk: usize, hop: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reference signal is all zeros")]
    ZeroReference,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("wav error in {path}: {detail}")]
    Wav { path: PathBuf, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for numerical failures, 2 for usage and configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. } | Error::Numeric(numcore::Error::NonFinite { .. }) => 1,
            _ => 2,
        }
    }
}

impl From<Error> for numcore::Error {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric(inner) => inner,
            other => numcore::Error::Invalid(other.to_string()),
        }
    }
}
