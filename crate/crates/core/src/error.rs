use thiserror::Error;

/// Errors raised by tree construction and the analytic operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("children count at level {level} is {value}; every entry must be >= 1")]
    NonPositiveChildrenCount { level: usize, value: i64 },

    #[error("tree size overflows 64-bit vertex counts")]
    SizeOverflow,

    #[error("tree has height 0; the operation needs at least one edge")]
    DegenerateTree,

    #[error("explicit tree would have {n} vertices, above the oracle cap of {cap}")]
    OracleTooLarge { n: u64, cap: u64 },

    #[error("invalid vertex pair: {0}")]
    InvalidPair(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver residual {residual:e} exceeds {tolerance:e}")]
    EigensolveFailure { residual: f64, tolerance: f64 },

    #[error("inertia count near {near} finds {got} eigenvalues, solver returned {expected}")]
    EigenvalueCount { near: f64, expected: u64, got: u64 },
    #[error(
        "spectral decomposition produced {got} eigenvalues for a tree with {expected} vertices"
    )]
    DecompositionMismatch { expected: u64, got: u64 },

    #[error("geometric decomposition needs start {expected}, got {got}")]
    InvalidStart { expected: usize, got: usize },

    #[error("test function is constant (special level 0)")]
    ConstantTestFunction,

    #[error("distance did not reach {epsilon} within {cap} steps")]
    NonConvergence { epsilon: f64, cap: u64 },

    #[error("singular linear system (pivot {pivot:e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("special vertex has {children} child subtrees; need at least 2")]
    NoBranching { children: u64 },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
