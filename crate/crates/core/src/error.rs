use thiserror::Error;

/// Errors raised by model construction, analysis and synthesis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("closed loop is not Hurwitz (max real part {max_real:e})")]
    NotHurwitz { max_real: f64 },

    #[error("spectral condition violated (margin {margin:e} at frequency {lambda:e})")]
    SpectralCondition { margin: f64, lambda: f64 },

    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("Sylvester equation is singular (separation {0:e})")]
    SingularSylvester(f64),

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("recursion matrix gamma_{k} is ill-conditioned (reciprocal condition {rcond:e})")]
    IllConditionedGamma { k: usize, rcond: f64 },

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("line search failed after {0} halvings")]
    LineSearch(usize),

    #[error("no admissible seed found within {0} draws")]
    NoAdmissibleSeed(usize),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures meaning the model is outside the admissible set.
    pub fn is_inadmissible(&self) -> bool {
        matches!(
            self,
            Error::NotHurwitz { .. } | Error::SpectralCondition { .. } | Error::NoAdmissibleSeed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
