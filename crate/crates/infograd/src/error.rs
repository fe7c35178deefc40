//! Crate-wide error type.
//!
//! Errors split into two broad families, which the CLI maps to distinct
//! exit codes:
//!
//! * validation errors: malformed inputs, shape mismatches, parameters
//!   outside their documented domain;
//! * feasibility errors: the requested computation cannot be carried out
//!   at the requested accuracy (enumeration grid too large, non-finite
//!   values produced mid-computation, root finding failed to bracket).

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or shape disagreement between two arguments.
    #[error("shape mismatch: {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A probability distribution failed validation.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// A scalar or matrix parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An argument lies outside the domain of a generator or density.
    #[error("domain violation: {0}")]
    Domain(String),

    /// An observed output has zero likelihood under every input atom.
    #[error("output outside channel support: {0}")]
    OutsideSupport(String),

    /// Exact enumeration would visit more cells than the configured cap.
    #[error(
        "enumeration grid has {cells} cells, above the cap of {cap}; \
         use the Monte Carlo method instead"
    )]
    GridTooLarge { cells: u128, cap: u128 },

    /// Numerical root finding or inversion failed.
    #[error("numerical inversion failed: {0}")]
    InversionFailed(String),

    /// Failed to parse matrix/vector text or a structured input.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors about the feasibility of a numerical computation,
    /// as opposed to malformed inputs.
    pub fn is_feasibility(&self) -> bool {
        matches!(
            self,
            Error::GridTooLarge { .. } | Error::NonFinite(_) | Error::InversionFailed(_)
        )
    }
}
