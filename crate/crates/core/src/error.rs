use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {what} (achieved error estimate {achieved:e})")]
    Numeric { what: String, achieved: f64 },

    #[error("stepsize not admissible: {condition}: {detail}")]
    Admissibility { condition: String, detail: String },

    #[error("chain {chain} diverged at step {step}")]
    Divergence { step: usize, chain: usize },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid config: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag used in CLI error JSON and FFI status mapping.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Numeric { .. } => "numeric",
            Error::Admissibility { .. } => "admissibility",
            Error::Divergence { .. } => "divergence",
            Error::Budget(_) => "budget",
            Error::Unsupported(_) => "unsupported",
            Error::Schema(_) => "schema",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
