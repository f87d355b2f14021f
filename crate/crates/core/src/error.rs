use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GeomError>;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("rank deficient: smallest singular value {sigma_min:.3e} below threshold {threshold:.3e}")]
    RankDeficient { sigma_min: f64, threshold: f64 },

    #[error("singular values {k} and {l} coincide (gap {gap:.3e})")]
    CoincidentSingularValues { k: usize, l: usize, gap: f64 },

    #[error("network is not balanced: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    NotBalanced { residual: f64, tolerance: f64 },

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("index out of range: {0}")]
    IndexError(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GeomError {
    /// Variant name, surfaced verbatim by the command-line front end.
    pub fn name(&self) -> &'static str {
        match self {
            GeomError::NonFinite => "NonFinite",
            GeomError::ShapeMismatch { .. } => "ShapeMismatch",
            GeomError::RankDeficient { .. } => "RankDeficient",
            GeomError::CoincidentSingularValues { .. } => "CoincidentSingularValues",
            GeomError::NotBalanced { .. } => "NotBalanced",
            GeomError::UnsupportedDimension(_) => "UnsupportedDimension",
            GeomError::IndexError(_) => "IndexError",
            GeomError::InvalidArgument(_) => "InvalidArgument",
            GeomError::Parse(_) => "Parse",
            GeomError::Io { .. } => "IoError",
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        GeomError::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
