use thiserror::Error;

/// Errors raised by array construction, simulation, and estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DoaError {
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),

    #[error("angle {0} rad is outside [-pi/2, pi/2] or not finite")]
    InvalidAngle(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("empty candidate set")]
    EmptyCandidateSet,

    #[error("no roots map to a valid direction")]
    EmptyRootSet,

    #[error("degenerate polynomial (all coefficients zero)")]
    DegeneratePolynomial,

    #[error("eigen solver failed: {0}")]
    Eigen(&'static str),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),
}

impl DoaError {
    /// Whether the error arose inside a numerical routine rather than from
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            DoaError::NonFinite(_)
                | DoaError::EmptyCandidateSet
                | DoaError::EmptyRootSet
                | DoaError::DegeneratePolynomial
                | DoaError::Eigen(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, DoaError>;

pub(crate) fn check_len(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(DoaError::DimensionMismatch {
            expected: format!("{what} of length {expected}"),
            actual: format!("length {actual}"),
        });
    }
    Ok(())
}
