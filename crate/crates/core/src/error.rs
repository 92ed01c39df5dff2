//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right} in {context}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("matrix is not positive definite in {context} (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { context: &'static str, min_eig: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid densities above 2 dimensions are unsupported (got {0})")]
    UnsupportedDimension(usize),

    #[error("sampling produced all-zero weights: the densities do not overlap at sample resolution")]
    DegenerateOverlap,

    #[error("singular sensor geometry: predicted range {range:.3} m below minimum {min:.3} m")]
    SingularGeometry { range: f64, min: f64 },

    #[error("scenario configuration invalid: {0}")]
    InvalidScenario(String),

    #[error("{failures} of {runs} Monte-Carlo runs failed (limit {limit_percent}%): first failure: {first}")]
    TooManyRunFailures {
        failures: usize,
        runs: usize,
        limit_percent: f64,
        first: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
