//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by grid construction, assembly, solvers and labs.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A linear system factorization hit an exactly zero pivot.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// An iterative solver exhausted its iteration budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A measured quantity degenerated (e.g. identically zero data).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Configuration file problems.
    #[error("config error: {0}")]
    Config(String),

    /// Output I/O problems (CSV, JSON, SVG writers).
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
