//! Error type shared by all modules.

use thiserror::Error;

/// Library-wide error enum.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or series dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A VAR model whose companion matrix has spectral radius at or above one.
    #[error("unstable model: spectral radius {radius} exceeds 1 - {tol}")]
    Unstable { radius: f64, tol: f64 },

    /// A matrix that must be symmetric positive definite is not.
    #[error("matrix not positive definite in {0}")]
    NotPositiveDefinite(String),

    /// The (weighted) design Gram matrix is singular or too ill-conditioned.
    #[error("singular design: {0}")]
    SingularDesign(String),

    /// All raw kernel values vanished, so weights cannot be normalized.
    #[error("degenerate kernel weights at t={t}: every kernel value is zero for bandwidth {bandwidth}")]
    DegenerateWeights { t: usize, bandwidth: f64 },

    /// An estimation call needs more presample values than the series holds.
    #[error("insufficient presample: need {needed}, have {available}")]
    InsufficientPresample { needed: usize, available: usize },

    /// The matrix power series for the stationary second moment did not converge.
    #[error("series did not converge after {iterations} terms (last increment {last_norm})")]
    NonConvergent { iterations: usize, last_norm: f64 },

    /// Any argument outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
