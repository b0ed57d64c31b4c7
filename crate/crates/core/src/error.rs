use thiserror::Error;

/// Errors raised by surface construction, geometry evaluation and flows.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid surface parameter: {0}")]
    InvalidParameter(String),

    #[error("resolution {got} on axis {axis} is below the minimum of {min} nodes")]
    ResolutionTooLow { axis: usize, got: usize, min: usize },

    #[error("height field is not admissible at node {node}: {reason}")]
    Inadmissible { node: usize, reason: String },

    #[error("operation requires a two-dimensional surface (m = 2), got m = {0}")]
    UnsupportedDimension(usize),

    #[error("height field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("linear solve did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("enclosed volume is undefined for a non-closed reference surface")]
    NotClosed,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FlowError {
    fn from(e: std::io::Error) -> Self {
        FlowError::Io(e.to_string())
    }
}

pub type Result<T, E = FlowError> = std::result::Result<T, E>;
