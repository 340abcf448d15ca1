//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        what: &'static str,
    },

    /// Item whose response column is constant; its intercept has no finite MLE.
    #[error("degenerate item {item}: all responses are {}", if *.all_ones { "1" } else { "0" })]
    DegenerateItem { item: usize, all_ones: bool },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite integrand value at quadrature point {point:?}")]
    NonFiniteIntegrand { point: Vec<f64> },

    /// Marginal pattern probability too small to represent in linear space.
    #[error("pattern log-probability {log_prob} underflows linear representation")]
    Underflow { log_prob: f64 },

    #[error("bracketing failure: {0}")]
    Bracketing(String),

    /// Estimated information I(theta) is not positive.
    #[error("ill-conditioned information for parameter {param}: I = {value}")]
    IllConditioned { param: String, value: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("MAPE undefined: reference value is zero at index {0}")]
    UndefinedMape(usize),

    #[error("replicate failure rate too high: {dropped} of {total} replicates failed (first failure: {first})")]
    TooManyDrops { dropped: usize, total: usize, first: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
