use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state {state:?} lies outside the system domain")]
    Domain { state: Vec<f64> },

    #[error("rank condition violated at {state:?}: smallest singular value {sigma_min:e} (scale {scale:e})")]
    RankCondition {
        state: Vec<f64>,
        sigma_min: f64,
        scale: f64,
    },

    #[error("invalid bracket scheme: {0}")]
    InvalidScheme(String),

    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate reference curve at t = {t}: planar speed squared {value:e}")]
    DegenerateCurve { t: f64, value: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn domain<T: crate::Real>(x: &[T]) -> Self {
        Error::Domain {
            state: x.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
