use thiserror::Error;

/// Errors produced by construction, verification and recovery routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    InvalidPrime(u64),
    #[error("field of order {order} exceeds the cap {cap}")]
    FieldTooLarge { order: u64, cap: u64 },
    #[error("division by zero in finite field")]
    DivisionByZero,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degree {requested} exceeds the available degree {available}")]
    DegreeTooLarge { requested: usize, available: usize },
    #[error("degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("invalid order {0}: Euler squares are built for n >= 3")]
    InvalidOrder(usize),
    #[error("index ({n},{k}) is not constructible: MacNeish bound allows k <= {max}")]
    IndexNotConstructible { n: usize, k: usize, max: usize },
    #[error("index ({n},{k}) too small: matrices need n >= 3 and k >= 2")]
    IndexTooSmall { n: usize, k: usize },
    #[error("row size {m} is unsupported: {reason}")]
    UnsupportedRowSize { m: usize, reason: String },
    #[error("order {0} is a single prime power, nothing to extend")]
    NothingToExtend(usize),
    #[error("no Hadamard matrix of order {0} is available")]
    HadamardUnavailable(usize),
    #[error("column {0} is zero")]
    DegenerateColumn(usize),
    #[error("Welch bound undefined for m={m}, M={cols} (needs M > m)")]
    BoundUndefined { m: usize, cols: usize },
    #[error("coherence is zero, sparsity guarantee is unbounded")]
    Unbounded,
    #[error("matrix provenance is required")]
    ProvenanceRequired,
    #[error("shape error: {0}")]
    ShapeError(String),
    #[error("solver did not converge after {iterations} iterations (feasibility {feasibility:.3e})")]
    ConvergenceFailure {
        iterations: usize,
        feasibility: f64,
        best: Vec<f64>,
    },
    #[error("invalid sparsity {k} for dimension {dim}")]
    InvalidSparsity { k: usize, dim: usize },
    #[error("SNR undefined for a zero reference signal")]
    UndefinedSnr,
    #[error("patch size {0} must be a power of two")]
    PatchSizeError(usize),
    #[error("image {height}x{width} cannot be tiled by {patch}x{patch} patches")]
    PatchGridError {
        height: usize,
        width: usize,
        patch: usize,
    },
    #[error("no label for image id {0}")]
    LabelError(String),
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
