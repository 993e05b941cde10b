use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] stgcn_core::Error),
    #[error(transparent)]
    Oracle(#[from] stgcn_oracle::OracleError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sequence file: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("sequence file: unsupported version {0}")]
    BadVersion(u8),
    #[error("sequence file: truncated while reading {0}")]
    Truncated(&'static str),
    #[error("sequence file: shape overflow ({0})")]
    ShapeOverflow(String),
    #[error("sequence file: {0}")]
    Malformed(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("unknown topology `{0}` (not a built-in name or readable file)")]
    UnknownTopology(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
