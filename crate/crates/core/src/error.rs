use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    Dimension {
        field: String,
        expected: String,
        found: String,
    },

    #[error("matrix `{0}` must be square")]
    NotSquare(String),

    #[error("matrix `{what}` is not symmetric (asymmetry {asymmetry:.3e})")]
    Asymmetric { what: String, asymmetry: f64 },

    #[error("columns are not orthonormal (residual {0:.3e})")]
    NotOrthonormal(f64),

    #[error("problem failed validation: {0}")]
    Validation(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("initial state x0 is required for this operation")]
    MissingInitialState,

    #[error("supplied reference solution rejected: residual {residual:.3e}, kernel condition {kernel:.3e}")]
    ReferenceRejected { residual: f64, kernel: f64 },

    #[error("Stein equation is not uniquely solvable: {0}")]
    SteinUnsolvable(String),

    #[error("closed form inapplicable: {0}")]
    ClosedFormInapplicable(String),

    #[error("ill-conditioned computation: {0}")]
    Conditioning(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// A numerical method declined to produce a result; a fallback exists.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::ReferenceRejected { .. }
                | Error::SteinUnsolvable(_)
                | Error::ClosedFormInapplicable(_)
                | Error::Conditioning(_)
        )
    }

    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Internal(_))
    }
}
