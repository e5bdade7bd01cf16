use thiserror::Error;

use crate::netmodel::Violation;

/// Errors raised while reading or validating a case.
#[derive(Debug, Error)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing `{0}`")]
    Missing(String),
    #[error("invalid network: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("network JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from graph decomposition.
#[derive(Debug, Error)]
pub enum DecompError {
    #[error("grid graph is disconnected; components: {0}")]
    Disconnected(String),
    #[error("determinant hierarchy level {0} is unsupported (use 2 or 3)")]
    UnsupportedLevel(usize),
    #[error("clique tree violates the running-intersection property at bus {0}")]
    RunningIntersection(usize),
}

/// Errors raised while assembling a model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("variable `{0}` needs finite bounds to build its envelope")]
    UnboundedEnvelopeParent(String),
    #[error("RLT cuts apply to determinant relaxations only, not {0}")]
    NotARelaxation(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("model text line {line}: {message}")]
    Text { line: usize, message: String },
    #[error(transparent)]
    Decomp(#[from] DecompError),
}

/// Errors from the bound-tightening driver.
#[derive(Debug, Error)]
pub enum TightenError {
    #[error("root relaxation is {0}; check the model and data")]
    RootRelaxation(String),
    #[error("no finite upper bound available")]
    NoUpperBound,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("upper bound: {0}")]
    UpperBound(String),
    #[error("configuration: {0}")]
    Config(String),
}
