use thiserror::Error;

pub type Result<T> = std::result::Result<T, GmpError>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GmpError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite: factorization failed at pivot {pivot}")]
    NotPositiveDefinite { pivot: usize },
    #[error("block {block} is not positive definite: factorization failed at pivot {pivot}")]
    BlockNotPositiveDefinite { block: usize, pivot: usize },
    #[error("kernel matrix is singular (pivot {pivot}); use lambda > 0 or the primal pseudo-inverse path")]
    SingularKernel { pivot: usize },
    #[error("encoding has no block structure")]
    MissingBlockStructure,
    #[error("invalid block structure: {0}")]
    InvalidBlockStructure(String),
    #[error("solver {method} failed: {source}")]
    Solver {
        method: crate::linalg::SolveMethod,
        #[source]
        source: Box<GmpError>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl GmpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GmpError::InvalidArgument(msg.into())
    }
}
