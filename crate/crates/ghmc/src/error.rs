use thiserror::Error;

/// Errors produced by construction and the numerical operations.
#[derive(Debug, Error)]
pub enum GhmcError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric: asymmetry {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotSymmetric { residual: f64, tol: f64 },

    #[error(
        "matrix is not positive definite: min eigenvalue {min_eigenvalue:.3e} at or below floor {floor:.3e}"
    )]
    NotPositiveDefinite { min_eigenvalue: f64, floor: f64 },

    #[error("spectral reconstruction residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    ReconstructionFailed { residual: f64, tol: f64 },

    #[error("basis is not orthonormal: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotOrthonormal { residual: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "covariance matrices do not commute: relative commutator {residual:.3e} exceeds {tol:.3e}"
    )]
    NonCommutingCovariances { residual: f64, tol: f64 },

    #[error("commuting-family check failed ({what}): residual {residual:.3e} exceeds {tol:.3e}")]
    CommutativityViolation {
        what: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("internal identity violated ({what}): residual {residual:.3e} exceeds {tol:.3e}")]
    IdentityViolation {
        what: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error(
        "adaptive quadrature did not converge to tolerance {tol:.3e} within depth {max_depth}"
    )]
    QuadratureNotConverged { tol: f64, max_depth: u32 },

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, GhmcError>;
