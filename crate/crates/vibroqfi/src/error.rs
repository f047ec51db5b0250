//! Crate-wide error type.
//!
//! Errors are grouped by what the caller can do about them: `Domain` means
//! the inputs violate a documented precondition, `UnsupportedRegime` means
//! the inputs are physical but outside what the implemented closed forms
//! cover, `Numerical` means an internal computation failed to converge or
//! lost too much accuracy, and `Config`/`Io` cover the CLI boundary.

use thiserror::Error;

/// All errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a documented precondition (e.g. a negative
    /// wavenumber or a non-Hermitian matrix where Hermiticity is required).
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are physically meaningful but outside the regime the
    /// implemented formulas cover (e.g. an over-damped Brownian bath).
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// An internal numerical procedure failed (quadrature did not converge,
    /// a finite-difference step hit the noise floor, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The time grid violates a resolution or coverage requirement.
    #[error("grid error: {0}")]
    Grid(String),

    /// A sweep configuration file could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    /// File system failure while reading inputs or writing artifacts.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
