use thiserror::Error;

use crate::pattern::ConditionReport;

/// Shape and index errors raised by tensor bookkeeping.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape must be non-empty with every dimension >= 1, got {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("expected {expected} values for shape {shape:?}, got {actual}")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("split {split} out of range 1..={max} for an order-{order} tensor")]
    SplitOutOfRange {
        split: usize,
        max: usize,
        order: usize,
    },
    #[error("index {index:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds { index: Vec<usize>, shape: Vec<usize> },
    #[error("invalid TT ranks {ranks:?}: {reason}")]
    InvalidRanks { ranks: Vec<usize>, reason: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Errors constructing or checking fiber observation patterns.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("pattern must observe at least one fiber")]
    NoObservedFibers,
    #[error("missing rate {0} not in [0, 1)")]
    InvalidRate(f64),
    #[error("pattern length {actual} does not match base shape {shape:?} ({expected} fibers)")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("pattern base shape {pattern:?} incompatible with tensor shape {tensor:?}")]
    ShapeMismatch {
        pattern: Vec<usize>,
        tensor: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Failures of the dense linear algebra layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("requested rank {rank} exceeds min({rows}, {cols})")]
    RankTooLarge { rank: usize, rows: usize, cols: usize },
    #[error("requested {keep} trailing vectors from a space of dimension {dim}")]
    KeepTooLarge { keep: usize, dim: usize },
    #[error("matrix of size {rows}x{cols} is rank deficient (sigma_min / sigma_max = {ratio:e})")]
    RankDeficient { rows: usize, cols: usize, ratio: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("SVD of a {rows}x{cols} matrix did not converge")]
    NoConvergence { rows: usize, cols: usize },
}

/// Failures of piecewise subspace estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubspaceError {
    #[error("rank must be >= 1")]
    ZeroRank,
    #[error("submatrix {index} is malformed: {reason}")]
    BadSubmatrix { index: usize, reason: String },
    #[error("not informationally complete: {0}")]
    InformationallyIncomplete(String),
    #[error("subspace not identifiable: gap {gap:e} <= tol {tol:e} (candidate dimension exceeds rank {rank})")]
    NotIdentifiable { gap: f64, tol: f64, rank: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Failures of the completion pipeline. Variants map onto the stable CLI exit codes.
#[derive(Debug, Error)]
pub enum CompletionError {
    #[error("observation pattern fails the uniqueness conditions: {}", .0.messages.join("; "))]
    Validation(Box<ConditionReport>),
    #[error("unfolding {split}: {source}")]
    Unidentifiable {
        split: usize,
        #[source]
        source: SubspaceError,
    },
    #[error("slice {slice} of the penultimate core is underdetermined: {source}")]
    SliceUnderdetermined {
        slice: usize,
        #[source]
        source: LinalgError,
    },
    #[error("only {observed} mode-N fibers observed, at least {required} required for the last core")]
    InsufficientFibers { observed: usize, required: usize },
    #[error("masked tensor does not match pattern: {0}")]
    MaskMismatch(String),
    #[error("completion needs an order >= 3 tensor, got order {0}")]
    OrderTooLow(usize),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Errors of the `.dtns` container format.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("bad magic {0:?}, expected \"dtns\"")]
    Magic(String),
    #[error("unsupported version {0}, expected 1")]
    Version(u32),
    #[error("expected a {expected} file, found {found}")]
    Kind { expected: String, found: String },
    #[error("payload has {actual} bytes, header requires {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("invalid payload: {0}")]
    Payload(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// Failures of synthetic data generation and metrics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("reference tensor has zero norm")]
    ZeroReference,
    #[error("shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("tensor holds non-finite values")]
    NonFinite,
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
