use thiserror::Error;

/// Errors raised by the solvers, metric builders and file loaders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeotError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("negative mass {value} at index {index}")]
    NegativeMass { index: usize, value: f64 },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unbalanced: use partial module (source total {source_total}, target total {target_total})")]
    Unbalanced { source_total: f64, target_total: f64 },

    #[error("solver stalled after {pivots} pivots (row error {row_error:e}, column error {col_error:e})")]
    SolverStalled {
        pivots: usize,
        row_error: f64,
        col_error: f64,
    },

    #[error("epsilon too small: {0}")]
    EpsilonTooSmall(String),

    #[error("solution did not converge")]
    NotConverged,

    #[error("constant field: Moran's I undefined")]
    ConstantField,

    #[error("degenerate weights: sum of weights is zero")]
    DegenerateWeights,

    #[error("infeasible target mean absolute residual {target} for mu = {mu}")]
    InfeasibleSigma { mu: f64, target: f64 },

    #[error("matrix of {entries} entries exceeds the memory budget of {budget} entries")]
    SizeLimit { entries: usize, budget: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GeotError {
    fn from(err: std::io::Error) -> Self {
        GeotError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GeotError>;
