use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has dimension zero")]
    EmptyMatrix,

    #[error("matrix is not Hermitian: |a_ij - conj(a_ji)| = {deviation:e} exceeds {tolerance:e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("eigen-solver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    EigenNotConverged { sweeps: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid Schatten exponent p = {0}: must satisfy 1 < p < inf")]
    InvalidExponent(f64),

    #[error("value {value} lies outside the function domain [{lo}, {hi}]")]
    OutsideDomain { value: f64, lo: f64, hi: f64 },

    #[error("spectrum point {value} leaves the working interval [-2, 2]")]
    OutsideWorkingInterval { value: f64 },

    #[error("derivative order {requested} exceeds the available order {available}")]
    OrderTooHigh { requested: usize, available: usize },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("quadrature did not reach tolerance {tol:e} (last two estimates differ by {achieved:e})")]
    QuadratureNotConverged { tol: f64, achieved: f64 },

    #[error("quadrature node budget {budget} exceeded")]
    NodeBudgetExceeded { budget: usize },

    #[error("kernel has no derivative available")]
    KernelNotDifferentiable,

    #[error("symbol evaluation failed at {point:?}")]
    SymbolEvaluation { point: Vec<f64> },

    #[error("trace has non-negligible imaginary part: {re} + {im}i")]
    ComplexTrace { re: f64, im: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not enough usable grid points: {usable} (need at least {required})")]
    GridTooCoarse { usable: usize, required: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
