use thiserror::Error;

use crate::subordination::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not selfadjoint (deviation {deviation:.3e})")]
    NotSelfadjoint { deviation: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is numerically singular: {0}")]
    Singular(&'static str),

    #[error("map not linear (superposition defect {defect:.3e})")]
    NotLinear { defect: f64 },

    #[error("point not in the {side} half-plane (margin {margin:.3e})")]
    NotInHalfPlane { side: &'static str, margin: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("map is not completely positive (Choi λ_min = {min_eigenvalue:.3e})")]
    NotCompletelyPositive { min_eigenvalue: f64 },

    #[error("outside R-domain: {0}")]
    OutsideRDomain(String),

    #[error("solver did not converge after {} iterations (residual {:.3e})", .0.iterations, .0.residual)]
    NoConvergence(Box<SolveReport>),

    #[error("derivative cross-check failed: {0}")]
    DerivativeCrossCheck(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid does not cover the sample: {0}")]
    Coverage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Whether the failure is numerical (solver budget exhausted) rather than bad input.
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::NoConvergence(_))
    }
}
