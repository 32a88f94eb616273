use thiserror::Error;

/// Failures raised while building models and estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix is empty ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },

    #[error("{what} contains a non-finite entry at ({row}, {col})")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("{what} is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { what: &'static str, asymmetry: f64 },

    #[error("matrix is not positive definite: pivot {pivot} is {value:.3e} (threshold {threshold:.3e})")]
    NotPositiveDefinite {
        pivot: usize,
        value: f64,
        threshold: f64,
    },

    #[error("constraint matrix A is rank deficient: rank {rank}, expected full row rank {rows}")]
    RankDeficientConstraints { rank: usize, rows: usize },

    #[error("constraint set has an empty nullspace (N_b = N_x = {n_x})")]
    EmptyNullspace { n_x: usize },

    #[error("constraint count N_b = {n_b} must satisfy 1 <= N_b < N_x = {n_x}")]
    ConstraintCount { n_b: usize, n_x: usize },

    #[error("constraint vector b is inconsistent with the supplied particular solution (residual {residual:.3e})")]
    InfeasibleParticular { residual: f64 },

    #[error("supplied nullspace basis is invalid: {reason}")]
    InvalidBasis { reason: String },

    #[error("{what} is rank deficient: rank {rank}, expected full column rank {cols}")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        cols: usize,
    },

    #[error("reduced model H*N is rank deficient: rank {rank}, expected {n0}")]
    RankDeficientReducedModel { rank: usize, n0: usize },

    #[error("KKT system is singular")]
    SingularKktSystem,

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}
