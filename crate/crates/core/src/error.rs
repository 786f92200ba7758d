use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed tensor header: {0}")]
    MalformedHeader(String),

    #[error("unsupported element type {0:?} (expected '<f4' or '<f8')")]
    UnsupportedDtype(String),

    #[error("payload length mismatch: header declares {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("map is constant; {0} is undefined")]
    ConstantMap(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("degenerate polygon (zero area)")]
    DegeneratePolygon,

    #[error("unknown category id {0}")]
    UnknownCategory(u64),

    #[error("zero variance: {0}")]
    ZeroVariance(&'static str),

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
