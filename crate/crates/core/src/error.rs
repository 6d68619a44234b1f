use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid rank {rank}: must lie in 1..={max}")]
    InvalidRank { rank: usize, max: usize },

    #[error("degenerate spectrum: all singular values are zero")]
    DegenerateSpectrum,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("cluster {label} has {size} donor(s); at least 2 are required")]
    DegenerateCluster { label: usize, size: usize },

    #[error("precision is undefined for an empty selection")]
    UndefinedPrecision,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("panel is empty after filtering: {0}")]
    EmptyPanel(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
