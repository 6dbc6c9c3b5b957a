use thiserror::Error;

/// Errors produced by the solver core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),

    #[error("material error: {0}")]
    Material(String),

    #[error("negative diagonal entry {value:e} in row {row}")]
    NegativeDiagonal { row: usize, value: f64 },

    #[error("nonpositive pivot {value:e} at index {index}")]
    NonPositivePivot { index: usize, value: f64 },

    #[error("PCG breakdown after {iterations} iterations (indefinite or inconsistent system)")]
    PcgBreakdown { iterations: usize },

    #[error("PCG did not converge: {iterations} iterations, relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("power iteration failed: {0}")]
    PowerIteration(String),

    #[error("instability detected at t = {t:e} s with dt = {dt:e} s: {detail}")]
    Instability { t: f64, dt: f64, detail: String },

    #[error("Newton iteration diverged at t = {t:e} s after {iterations} iterations (try a smaller dt)")]
    NewtonDiverged { t: f64, iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
