use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty sample set")]
    EmptySamples,

    /// Log-likelihood or density evaluated to a non-finite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// All candidate parameters give the same objective value.
    #[error("objective is flat over the parameter domain")]
    FlatObjective,

    #[error("degenerate denominator: {0}")]
    Degenerate(String),

    #[error("quadrature failed to converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },

    #[error("retry budget exhausted: {0}")]
    RetryBudget(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported circuit: {0}")]
    Unsupported(String),

    /// Internal consistency failure in the simulator.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
