use thiserror::Error;

/// Errors produced by the twin, scheduler, learner and persistence layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("insufficient history: need {needed} observations, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("exogenous features do not cover the requested range: {0}")]
    Coverage(String),
    #[error("infeasible schedule problem: {0}")]
    Infeasible(String),
    #[error("problem too large: {0}")]
    SizeGuard(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("incompatible schema version {found} (supported: {supported})")]
    Incompatible { found: u32, supported: u32 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("model not trained")]
    Untrained,
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
