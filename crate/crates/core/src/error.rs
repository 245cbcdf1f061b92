use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("point ({x}, {y}) is not strictly inside the quad")]
    ExteriorPoint { x: f64, y: f64 },

    #[error("quad is not convex")]
    NonConvex,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("positional encoding already applied to this sequence")]
    EncodingAlreadyApplied,

    #[error("invalid input: {0}")]
    Input(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
