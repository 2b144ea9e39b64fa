use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("state outside the potential domain at node {node} (value {value})")]
    Domain { node: usize, value: f64 },
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<SimError>,
    },
}

pub type Result<T> = std::result::Result<T, SimError>;

pub(crate) fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidInput(msg.into())
}
