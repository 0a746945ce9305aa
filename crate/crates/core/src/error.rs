use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("image {height}x{width} is smaller than the required {min}x{min}")]
    Undersized {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("insufficient source data: {0}")]
    InsufficientSources(String),

    #[error("histogram bins do not match")]
    HistogramMismatch,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("{id}: {source}")]
    Item {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid format in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by the numerical state rather than inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite(_) | Error::Diverged { .. } => true,
            Error::Item { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
