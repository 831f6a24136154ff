use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric/Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("vector length {0} is not of the form N^2 - 1 (or N(N+1)/2 - 1) for N >= 2")]
    InvalidLength(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape constraint mismatch: {0}")]
    ConstraintMismatch(String),

    #[error("degenerate observation {index}: coincides with the location estimate")]
    DegenerateObservation { index: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("perturbed shape matrix is not positive definite; use a smaller perturbation scale")]
    PerturbationNotPositiveDefinite,

    #[error("perturbation matrix has zero effect (zero denominator in alpha estimate)")]
    ZeroPerturbation,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
