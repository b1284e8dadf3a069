use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability level {0} outside [0, 1)")]
    InvalidProbability(f64),

    #[error("sample must contain at least one value")]
    EmptySample,

    #[error("non-finite value {value} at position {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("constraint oracle returned {value} for scenario {scenario}")]
    Evaluation { scenario: usize, value: f64 },

    #[error("objective oracle returned non-finite value {0}")]
    ObjectiveEvaluation(f64),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("master QP did not converge after {iterations} iterations (KKT residual {residual:e})")]
    Qp {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("incomplete gamma evaluation did not converge at a={a}, x={x}")]
    Gamma { a: f64, x: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
