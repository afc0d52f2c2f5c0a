use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the meshband pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no voxels in region")]
    EmptyRegion,

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("session window [{offset}, {end}) exceeds series length {len}")]
    SessionOutOfRange {
        offset: usize,
        end: usize,
        len: usize,
    },

    #[error("wavelet: {0}")]
    Wavelet(String),

    #[error("region {0} has a zero-variance series")]
    ZeroVariance(usize),

    #[error("normal equations are singular; use lambda > 0")]
    Singular,

    #[error("training data contains a single class; at least two are required")]
    SingleClass,

    #[error("group `{group}` has {size} rows; at least 2 are required")]
    SmallGroup { group: String, size: usize },

    #[error("misaligned feature tables: {0}")]
    Misaligned(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("binary container: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Tag an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
