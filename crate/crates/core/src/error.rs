use thiserror::Error;

/// Failure raised by a term evaluator.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message}")]
pub struct EvalError {
    pub message: String,
}

impl EvalError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("term `{label}` failed to evaluate: {source}")]
    TermEvaluation {
        label: String,
        #[source]
        source: EvalError,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line search: direction is not a descent direction (slope {slope:e})")]
    NonDescent { slope: f64 },

    #[error("quadratic program is infeasible (most violated row {row})")]
    QpInfeasible { row: usize },

    #[error("quadratic program solve failed: {0}")]
    QpFailed(String),

    #[error("schema error in {context}: {message}")]
    Schema { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
