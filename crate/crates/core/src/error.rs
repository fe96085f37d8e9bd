use thiserror::Error;

/// Errors produced anywhere in the beamforming pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (e.g. a non-Hermitian
    /// matrix where a Hermitian one was required).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Covariance or design matrix has an eigenvalue below the PSD floor.
    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The optimization problem (or a stage of it) has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The conic solver did not reach a certified status.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Gaussian randomization produced no candidate meeting the SNR constraint.
    #[error("rounding failed: none of {samples} randomized candidates was feasible")]
    RoundingFailed { samples: usize },

    /// The rank-one reconstruction is undefined because `h^H W h` vanished.
    #[error("degenerate rank-one extraction: h^H W h = {0:.3e}")]
    DegenerateExtraction(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
