use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MosaicError>;

#[derive(Debug, Error)]
pub enum MosaicError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {location}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("{}: no valid records ({dropped} dropped)", path.display())]
    EmptyDataset { path: PathBuf, dropped: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid rule registry: {0}")]
    Registry(String),

    #[error("{rule} needs at least {min} instructions, got {k}")]
    KTooSmall {
        rule: &'static str,
        min: usize,
        k: usize,
    },

    #[error("rule was sampled for {expected} instructions but applied to {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dataset has {len} records, fewer than k = {k}")]
    DatasetTooSmall { len: usize, k: usize },

    #[error("unknown sample_id {0:?}")]
    UnknownSample(String),

    #[error("{0}")]
    Data(String),
}

impl MosaicError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        MosaicError::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration or registry problems, as opposed to problems with the
    /// data being processed.
    pub fn is_config(&self) -> bool {
        matches!(self, MosaicError::Config(_) | MosaicError::Registry(_))
    }
}
