use tempfair_milp::MilpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Utility vectors or histories that do not share one entity list.
    #[error("structural mismatch: {0}")]
    Structural(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("plan step {step} violates constraint: {constraint}")]
    ConstraintViolation { step: usize, constraint: String },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("history log rejected record: {0}")]
    Rejected(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Solver(#[from] MilpError),
}

pub type Result<T> = std::result::Result<T, CoreError>;
