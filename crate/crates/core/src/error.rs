use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("format error in {path}: expected magic {expected}, found {found}")]
    Format {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: need {needed} bytes, have {actual}")]
    Length {
        path: PathBuf,
        needed: usize,
        actual: usize,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("container error: {0}")]
    Container(String),

    #[error("shape mismatch for layer {layer} `{name}`: expected {expected:?}, found {found:?}")]
    LayerShape {
        layer: usize,
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
