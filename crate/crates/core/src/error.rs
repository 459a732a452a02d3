use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("matrix is not Hermitian (max |m - m†| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("negative eigenvalue {value:.3e} below tolerance")]
    NegativeEigenvalue { value: f64 },

    #[error("matrix is singular where a full-rank argument is required")]
    Singular,

    #[error("invalid parameter: {0}")]
    BadParameter(String),

    #[error("invalid partition: {0}")]
    BadPartition(String),

    #[error("operation requires a normalized state")]
    Subnormalized,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("support of the argument is not contained in the feasible set: {0}")]
    InfeasibleSupport(String),

    #[error("dimension {dim} exceeds the dense limit {limit}")]
    DimensionBlowup { dim: usize, limit: usize },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("{field}: {message}")]
    StateFile { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
