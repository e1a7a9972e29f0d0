use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("observation {value} outside support [0, {upper}]")]
    OutsideSupport { value: f64, upper: f64 },

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// Root finding failed inside an estimator; carries a coarse scan of the
    /// residual so the failure can be inspected afterwards.
    #[error("{stage}: solver did not converge: {source}")]
    NonConvergence {
        stage: &'static str,
        #[source]
        source: Box<Error>,
        residual_curve: Vec<(f64, f64)>,
    },

    #[error("degenerate class {class}: {reason}")]
    DegenerateClass { class: usize, reason: &'static str },

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
