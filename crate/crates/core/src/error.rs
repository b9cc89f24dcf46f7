use thiserror::Error;

/// Errors surfaced by the simulator core.
///
/// The CLI maps these onto its exit-code contract, so variants distinguish
/// configuration problems, numerical failures and check-style violations.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("numerical failure in {context}: {reason}")]
    Numerical { context: &'static str, reason: String },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("size mismatch for {what}: expected {expected}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("coefficient returned a non-finite value at {0}")]
    NonFinite(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("operator identity violated: {0}")]
    IdentityViolation(String),

    #[error(
        "Picard iteration did not converge: residual {residual:.3e} after {iterations} \
         iterations (theoretical contraction factor {factor:.3})"
    )]
    PicardDiverged {
        residual: f64,
        iterations: usize,
        factor: f64,
    },

    #[error("decay fit refused: {0}")]
    FitRefused(String),

    #[error("solver fault: {0}")]
    SolverFault(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CoreError {
    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        CoreError::Config {
            field,
            reason: reason.into(),
        }
    }

    pub fn numerical(context: &'static str, reason: impl Into<String>) -> Self {
        CoreError::Numerical {
            context,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
