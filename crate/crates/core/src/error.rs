use thiserror::Error;

/// Errors raised by the subspace calculus, the polyhedral routines and the solver front end.
#[derive(Debug, Error)]
pub enum ScdError {
    #[error("matrix has numerical rank below {expected}")]
    RankDeficient { expected: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("subspace is not regular (lower block is singular)")]
    NotRegular,

    #[error("transformation matrix is singular")]
    SingularTransform,

    #[error("polyhedral set is empty")]
    InfeasibleSet,

    #[error("quadratic program did not terminate within {iterations} iterations")]
    QpFailure { iterations: usize },

    #[error("point violates the set constraints by {violation:e}")]
    PointNotInSet { violation: f64 },

    #[error("vector is not a normal to the set (distance {residual:e})")]
    NotANormal { residual: f64 },

    #[error("dimension {n} exceeds the supported limit {limit}")]
    ScaleLimitExceeded { n: usize, limit: usize },

    #[error("derivative bundle is empty")]
    EmptyBundle,

    #[error("no regular subspace in the derivative bundle")]
    NoRegularSubspace,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ScdError> = std::result::Result<T, E>;
