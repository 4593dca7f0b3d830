use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("separator returned a constraint that was already added: {0}")]
    DuplicateCut(String),
    #[error("separator returned a constraint that is not violated at the current point (violation {violation:.3e})")]
    NonViolatedCut { violation: f64 },
}
