use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("raw Slutsky diagonal entry {index} is non-negative ({value})")]
    NonNegativeDiagonal { index: usize, value: f64 },

    #[error("matrix is not symmetric: |D[{i},{j}] - D[{j},{i}]| = {deviation:e}")]
    AsymmetricInput { i: usize, j: usize, deviation: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("linear system (I - D) is not positive definite")]
    SingularSystem,

    #[error("symmetric eigensolver failed to converge")]
    ConvergenceFailure,

    #[error("negative status-quo quantity at index {index} ({value})")]
    NegativeQuantity { index: usize, value: f64 },

    #[error("noisy diagonal estimate {index} changed sign ({value}); normalization undefined")]
    DiagonalSignFlip { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("f = {f} makes ||q0|| exceed 1 (limit {limit})")]
    FTooLarge { f: f64, limit: f64 },

    #[error("B = I + alpha (Sigma - I) is singular")]
    SingularB,

    #[error("intervention direction is zero")]
    DegenerateSigma,

    #[error("no recoverable structure: eigenspace at threshold {threshold} is empty")]
    NoRecoverableStructure { threshold: f64 },

    #[error("projection of observed quantities has magnitude {magnitude:e}, below floor {floor:e}")]
    DegenerateProjection { magnitude: f64, floor: f64 },

    #[error("targets infeasible: with D = -I only C_dot = S_dot/2 is attainable (got C_dot = {c_dot}, S_dot = {s_dot})")]
    InfeasibleTargets { c_dot: f64, s_dot: f64 },

    #[error("no eigenpair with distinct eigenvalues and non-zero quantity projections")]
    DegenerateProjections,

    #[error("empty subspace: {0}")]
    EmptySubspace(String),

    #[error("empty sample")]
    EmptySample,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short stable tag used when a rule failure is recorded as an outcome.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonNegativeDiagonal { .. } => "non_negative_diagonal",
            Error::AsymmetricInput { .. } => "asymmetric_input",
            Error::NonFinite(_) => "non_finite",
            Error::SingularSystem => "singular_system",
            Error::ConvergenceFailure => "convergence_failure",
            Error::NegativeQuantity { .. } => "negative_quantity",
            Error::DiagonalSignFlip { .. } => "diagonal_sign_flip",
            Error::InvalidConfig(_) => "invalid_config",
            Error::FTooLarge { .. } => "f_too_large",
            Error::SingularB => "singular_b",
            Error::DegenerateSigma => "degenerate_sigma",
            Error::NoRecoverableStructure { .. } => "no_recoverable_structure",
            Error::DegenerateProjection { .. } => "degenerate_projection",
            Error::InfeasibleTargets { .. } => "infeasible_targets",
            Error::DegenerateProjections => "degenerate_projections",
            Error::EmptySubspace(_) => "empty_subspace",
            Error::EmptySample => "empty_sample",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Parse(_) => "parse",
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
