use thiserror::Error;

use crate::families::expr::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("parameter {theta:?} is outside the parameter domain: {reason}")]
    Domain { theta: Vec<f64>, reason: String },

    #[error("parameter {theta:?} is closer than {step:e} to the domain boundary")]
    DomainMargin { theta: Vec<f64>, step: f64 },

    #[error("sample point x = {x} is outside the sample space")]
    SampleSpace { x: f64 },

    #[error("non-finite {what} at node x = {x}")]
    NonFinite { what: String, x: f64 },

    #[error("singular Fisher metric, eigenvalues {eigenvalues:?}")]
    SingularMetric { eigenvalues: Vec<f64> },

    #[error("singular frame, |det A| = {det:e}")]
    SingularFrame { det: f64 },

    #[error("horizontal lift degenerated at t = {t}: |det A| = {det:e}")]
    LiftDegeneracy { t: f64, det: f64 },

    #[error("integration failed at t = {t}; last valid state {last_theta:?}")]
    Integration { t: f64, last_theta: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expression evaluation: {0}")]
    Eval(String),

    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl Error {
    pub(crate) fn domain(theta: &[f64], reason: impl Into<String>) -> Self {
        Error::Domain {
            theta: theta.to_vec(),
            reason: reason.into(),
        }
    }
}
