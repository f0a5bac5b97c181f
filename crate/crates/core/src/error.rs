use thiserror::Error;

/// Errors raised by the library. Feasibility questions that merely lack an
/// answer are reported through verdicts, not through this type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NonHermitian { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("state sets have different sizes ({left} vs {right})")]
    SizeMismatch { left: usize, right: usize },
    #[error("non-finite entry encountered")]
    NonFinite,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("state {index} is orthogonal to the first state; canonical Gram matrix undefined")]
    OrthogonalPair { index: usize },
    #[error("state {index} is mixed where a pure state is required")]
    MixedMember { index: usize },
    #[error("source state {index} is not pure")]
    SourceNotPure { index: usize },
    #[error("target state {index} is not pure")]
    TargetNotPure { index: usize },
    #[error("expected dimension {expected}, found {found}")]
    WrongDimension { expected: usize, found: usize },
    #[error("priors must be non-negative and sum to one (got {p1}, {p2})")]
    BadPriors { p1: f64, p2: f64 },
    #[error("bad probability matrix: {0}")]
    BadProbabilityMatrix(String),
    #[error("witness inconsistent with the instance: {0}")]
    WitnessInconsistent(String),
    #[error("map is not trace preserving (residual {residual:.3e})")]
    NotTracePreserving { residual: f64 },
    #[error("targets {i} and {j} are orthogonal; uniqueness is not claimed")]
    OrthogonalTargets { i: usize, j: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("singular value decomposition failed to reproduce its input")]
    SvdFailed,
}

pub type Result<T> = std::result::Result<T, Error>;
