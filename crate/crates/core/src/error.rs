//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, discretization and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// A spacing at or below the hard core entered an energy evaluation.
    #[error("hard-core violation: spacing {spacing} <= r_hc {r_hc}")]
    HardCore { spacing: f64, r_hc: f64 },

    /// Invalid model parameters.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Grid and model dimensions disagree.
    #[error("grid dimension mismatch: {0}")]
    GridMismatch(String),

    /// Iterative eigen-solver did not reach the requested residual.
    #[error("eigen iteration did not converge: residual {residual} after {iterations} iterations (tol {tol})")]
    EigenNoConvergence {
        residual: f64,
        iterations: usize,
        tol: f64,
    },

    /// Two routes to the same quantity disagree beyond tolerance.
    #[error("inconsistency: {0}")]
    Inconsistency(String),

    /// Requested intensity cannot be realised by the model.
    #[error("infeasible density: {0}")]
    InfeasibleDensity(String),

    /// Root bracketing or iteration left the supported range.
    #[error("search failed: {0}")]
    SearchFailure(String),

    /// Not enough data to run a diagnostic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A minorisation certificate does not describe the kernel it is used with.
    #[error("certificate inconsistency: {0}")]
    CertificateInconsistency(String),

    /// Experiment configuration is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// Operation precondition violated.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
