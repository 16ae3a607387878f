use thiserror::Error;

/// Errors produced by the library.
///
/// Variants are grouped so that the CLI can map them onto exit codes:
/// configuration problems, privacy-budget problems and data problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("column `{column}`: {message}")]
    Column { column: String, message: String },

    #[error("unknown category `{value}` in column `{column}`")]
    UnknownCategory { column: String, value: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("timestep {t} outside 1..={steps}")]
    Timestep { t: usize, steps: usize },

    #[error("non-finite loss for sample {index}")]
    NonFiniteLoss { index: usize },

    #[error("privacy budget exceeded: {steps_taken} of {max_steps} steps used")]
    BudgetExceeded { steps_taken: usize, max_steps: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The kind of failure, used for exit-code mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Budget,
    Data,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::BudgetExceeded { .. } | Error::Calibration(_) => ErrorKind::Budget,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn column(column: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Column { column: column.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
