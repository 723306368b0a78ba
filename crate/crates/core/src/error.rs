use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("capacity exceeded: {requested} nodes requested, cap is {cap}")]
    Capacity { requested: usize, cap: usize },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("non-finite value at node {node} for control index {control}")]
    NonFinite { node: usize, control: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("tuner failed: every candidate shape parameter failed")]
    TunerExhausted,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
