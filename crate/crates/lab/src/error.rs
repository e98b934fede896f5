use simwave_core::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// Scenario file or command line is malformed or inconsistent.
    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    /// 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Sim(SimError::Validation(_) | SimError::Config(_) | SimError::Dimension(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
