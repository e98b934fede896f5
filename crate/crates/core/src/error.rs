use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    /// An argument violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two points coincide where a propagation kernel needs a finite distance.
    #[error("singular geometry: {0}")]
    Singularity(String),

    /// Grids or sampling points are arranged in an unsupported way.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A linear system does not pin down a unique solution.
    #[error("underdetermined: {0}")]
    Underdetermined(String),

    /// A matrix that must be full rank is not.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// A loss or gradient became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Component configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        {
            // a NaN operand makes the condition false, so it fails the check
            let holds: bool = $cond;
            if !holds {
                return Err($crate::error::SimError::$variant(format!($($arg)+)));
            }
        }
    };
}
pub(crate) use ensure;
