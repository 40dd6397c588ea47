use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-positive transmissivity {value} at node {node}")]
    InvalidTransmissivity { node: usize, value: f64 },

    #[error("system is singular: no Dirichlet nodes")]
    SingularSystem,

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("point ({x}, {y}) lies outside the mesh")]
    OutOfDomain { x: f64, y: f64 },

    #[error("matrix of size {size} exceeds the configured cap of {cap}")]
    SizeLimit { size: usize, cap: usize },

    #[error("eigendecomposition failed: {0}")]
    DecompositionFailure(String),

    #[error("non-finite value in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("training diverged at epoch {epoch} (best epoch {best_epoch})")]
    TrainingDiverged { epoch: usize, best_epoch: usize },

    #[error("bias covariance plus noise covariance is not positive definite")]
    ErrorModelDegenerate,

    #[error("subchain stalled: {accepted}/{required} acceptances after {coarse_steps} coarse steps")]
    SubchainStall {
        coarse_steps: usize,
        accepted: usize,
        required: usize,
    },

    #[error("series has zero variance")]
    DegenerateSeries,

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidTransmissivity { .. } => "invalid-transmissivity",
            Error::SingularSystem => "singular-system",
            Error::SolverFailure { .. } => "solver-failure",
            Error::OutOfDomain { .. } => "out-of-domain",
            Error::SizeLimit { .. } => "size-limit",
            Error::DecompositionFailure(_) => "decomposition-failure",
            Error::NumericOverflow { .. } => "numeric-overflow",
            Error::TrainingDiverged { .. } => "training-diverged",
            Error::ErrorModelDegenerate => "error-model-degenerate",
            Error::SubchainStall { .. } => "subchain-stall",
            Error::DegenerateSeries => "degenerate-series",
            Error::Internal(_) => "internal-error",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
