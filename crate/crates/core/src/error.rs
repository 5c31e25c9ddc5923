use thiserror::Error;

/// Errors raised by the toolkit. Each variant maps to one failure family
/// so callers (notably the CLI) can translate them into exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("interconnection error: {0}")]
    Interconnection(String),

    #[error("frequency evaluation failed: {0}")]
    Evaluation(String),

    #[error("identification failed: {0}")]
    Identification(String),

    #[error("synthesis failed: {message}")]
    Synthesis {
        message: String,
        /// Penalised objective of the best infeasible point.
        best_objective: f64,
        best_params: Vec<f64>,
    },

    #[error("simulation failed at t = {t:.4} s: {message}")]
    Simulation { t: f64, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn dim(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
