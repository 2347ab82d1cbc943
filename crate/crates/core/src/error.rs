use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmffError {
    #[error("separation {separation:.3e} m is not above the near-field floor {r_min:.3e} m")]
    SeparationTooSmall { separation: f64, r_min: f64 },

    #[error("dipole allocation did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("dipole component {value:.3e} A m^2 on satellite {satellite} exceeds coil limit {limit:.3e}")]
    SaturationExceeded { satellite: usize, value: f64, limit: f64 },

    #[error("constraint system is numerically singular (condition number {condition:.3e})")]
    SingularConstraint { condition: f64 },

    #[error("bracket matrix is singular (condition number {condition:.3e})")]
    SingularBracketMatrix { condition: f64 },

    #[error("reduced mass matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateState(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmffError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(EmffError::Dimension { expected, got })
    }
}
