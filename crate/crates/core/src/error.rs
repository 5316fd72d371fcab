use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("{what} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { what: String, min_eigenvalue: f64 },

    #[error("matrix has no singular value above the rank tolerance")]
    ZeroMatrix,

    #[error("budget rank l = {budget} does not match the effective rank l = {actual}")]
    RankMismatch { budget: usize, actual: usize },

    /// `½·F⁻¹_{χ²_l}(1−δ) < ε` fails, so no Gaussian noise can meet the budget.
    #[error(
        "necessary condition ½F⁻¹(1−δ) < ε violated: ½F⁻¹(1−δ) = {half_quantile}, ε = {epsilon}"
    )]
    NecessaryConditionViolated { half_quantile: f64, epsilon: f64 },

    #[error("root bracket failed: {0}")]
    NoRoot(String),

    #[error("A is not Schur stable (spectral radius {spectral_radius})")]
    NotSchurStable { spectral_radius: f64 },

    #[error("iteration did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn not_pd(what: impl Into<String>) -> Self {
        Error::NotPositiveDefinite { what: what.into() }
    }
}
