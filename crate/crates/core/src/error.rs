use std::path::PathBuf;

/// Unified error type for the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed image or container file. Reports the byte offset where the
    /// problem was detected so the file can be inspected directly.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// An operator or builder was given an out-of-range parameter.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Tensor or image dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Dataset-level inconsistency (missing file, bad manifest record, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure (divergence, NaN loss, singular problem).
    #[error("numerical error: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
