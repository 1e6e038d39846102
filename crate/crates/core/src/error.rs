use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the domain where the quantity is defined.
    #[error("{what} = {value} is outside the admissible domain {lo}..={hi}")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    /// A division by a (numerically) vanishing quantity was requested.
    #[error("singular {what}: {value}")]
    Singular { what: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown prompt id {id} (field has {registered} conditions)")]
    UnknownPrompt { id: usize, registered: usize },
    /// An iterate became non-finite or exceeded the divergence guard.
    #[error("divergence at step {step}: {reason}")]
    Divergence { step: usize, reason: &'static str },
    #[error("unreliable Monte-Carlo estimate: effective sample size {ess:.2} < {required}")]
    Unreliable { ess: f64, required: f64 },
    #[error("degenerate path: chord length {chord:e} below {min:e}")]
    DegeneratePath { chord: f64, min: f64 },
    #[error("non-finite value from {0}")]
    NonFinite(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
