//! Crate-wide error type.

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by validation, parsing, and the numerical pipelines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A target index falls outside `0..n`.
    #[error("target index {index} is out of range for a system with {n} nodes")]
    TargetOutOfRange { index: usize, n: usize },

    /// The same target index was listed twice.
    #[error("duplicate target index {index}")]
    DuplicateTarget { index: usize },

    /// Generic shape/argument validation failure.
    #[error("{0}")]
    Invalid(String),

    /// A matrix contained NaN or infinite entries.
    #[error("{context}: matrix contains non-finite entries")]
    NonFinite { context: &'static str },

    /// The horizon must be strictly positive.
    #[error("time horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),

    /// Quadrature failed to reach the requested accuracy within the step
    /// budget; carries the last observed relative residual.
    #[error("quadrature did not converge within the step budget (residual {residual:.3e}, target {target:.3e})")]
    QuadratureAccuracy { residual: f64, target: f64 },

    /// The assembled Gramian `W(p,T)` is not positive definite, so the
    /// objectives are undefined at this point.
    #[error("weight vector is infeasible: W(p,T) is not positive definite (lambda_min = {lambda_min:.6e})")]
    Infeasible { lambda_min: f64 },

    /// Armijo backtracking exhausted its halving budget, which signals a
    /// stationary or severely ill-conditioned point.
    #[error("Armijo line search failed after {halvings} halvings (gradient norm {gradient_norm:.3e})")]
    LineSearchFailure { halvings: u32, gradient_norm: f64 },

    /// Matrix file could not be parsed; carries a human-readable location.
    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    /// A cohort subject does not match the cohort dimension.
    #[error("subject {path} has dimension {found}, expected {expected}")]
    SubjectMismatch {
        path: String,
        expected: usize,
        found: usize,
    },

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Exit-status classification used by the command-line front end:
    /// `1` for validation/parse errors, `2` for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::QuadratureAccuracy { .. }
            | Error::Infeasible { .. }
            | Error::LineSearchFailure { .. } => 2,
            _ => 1,
        }
    }
}
