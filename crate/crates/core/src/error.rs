use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Fock dimension {0} (need at least 2)")]
    InvalidDimension(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("truncation leakage {leakage:.3e} exceeds limit {limit:.1e} at dim {dim}")]
    Truncation { leakage: f64, limit: f64, dim: usize },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("degenerate family at alpha = {alpha}: {reason}")]
    Degenerate { alpha: f64, reason: String },

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
}

impl Error {
    pub(crate) fn parse(position: usize, message: impl Into<String>) -> Self {
        Error::Parse { position, message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
