use std::io;

/// Which matrix of a cache/query pair an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Keys,
    Values,
    Queries,
}

impl std::fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatrixKind::Keys => "keys",
            MatrixKind::Values => "values",
            MatrixKind::Queries => "queries",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("non-finite entry in {matrix} at ({row}, {col})")]
    NonFiniteEntry {
        matrix: MatrixKind,
        row: usize,
        col: usize,
    },
    #[error("cache or query batch is empty")]
    EmptyCache,
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("selection is empty")]
    EmptySelection,
    #[error("invalid inclusion probability {prob} for index {index}")]
    InvalidProbability { index: usize, prob: f64 },
    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate index {0} in selection")]
    DuplicateIndex(usize),
    #[error("reference vector has zero norm")]
    ZeroReference,
    #[error("count {count} out of range (available {available})")]
    CountOutOfRange { count: usize, available: usize },
    #[error("budget {budget} exceeds residual size {residual}")]
    BudgetExceedsResidual { budget: usize, residual: usize },
    #[error("degenerate (zero-norm) vector")]
    DegenerateVector,
    #[error("empty base sample")]
    EmptyBaseSample,
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
