use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qefsynth::Error),
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use qefsynth::Error as E;
        match self {
            CliError::Read { .. } | CliError::Usage(_) | CliError::Core(E::Parse(_)) => 2,
            CliError::Core(
                E::InvalidModel(_) | E::Dimension { .. } | E::NotHurwitz { .. } | E::SpectralCondition { .. } | E::NoAdmissibleSeed(_),
            ) => 3,
            _ => 4,
        }
    }

    /// Short machine-readable tag.
    pub fn reason(&self) -> &'static str {
        use qefsynth::Error as E;
        match self {
            CliError::Read { .. } => "read_error",
            CliError::Write { .. } => "write_error",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                E::Parse(_) => "parse_error",
                E::Dimension { .. } => "dimension_mismatch",
                E::InvalidModel(_) => "invalid_model",
                E::NotHurwitz { .. } => "not_hurwitz",
                E::SpectralCondition { .. } => "spectral_condition",
                E::NoAdmissibleSeed(_) => "no_admissible_seed",
                E::LineSearch(_) => "line_search_failed",
                E::Quadrature(_) => "quadrature_failed",
                E::NoStabilizingSolution(_) => "riccati_failed",
                E::IllConditionedGamma { .. } => "ill_conditioned_recursion",
                _ => "numerical_failure",
            },
        }
    }

    pub fn report(&self) -> Value {
        json!({ "status": "error", "exit_code": self.exit_code(), "reason": self.reason(), "message": self.to_string() })
    }
}
