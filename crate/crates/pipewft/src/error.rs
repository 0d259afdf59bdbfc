use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("vacuum: density {rho:e} below floor")]
    Vacuum { rho: f64 },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("solver did not converge: {0}")]
    Solver(String),
    #[error("sonic transition: |v|/c = {ratio} at {context}")]
    Sonic { ratio: f64, context: String },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("wave speed regime violated: {0}")]
    Regime(String),
    #[error("outside admissible neighborhood: {0}")]
    Neighborhood(String),
    #[error("profile error: {0}")]
    Profile(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// Evolution stopped early; `dump` holds the serialized state at the stop.
    #[error("evolution aborted: {reason}")]
    Aborted { reason: String, dump: String },
}

impl Error {
    /// Wraps solver-like failures with extra context, leaving the variant intact.
    pub fn context(self, ctx: &str) -> Error {
        match self {
            Error::Solver(m) => Error::Solver(format!("{ctx}: {m}")),
            Error::Integration(m) => Error::Integration(format!("{ctx}: {m}")),
            Error::Regime(m) => Error::Regime(format!("{ctx}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Sonic { ratio, context } => Error::Sonic {
                ratio,
                context: format!("{ctx}: {context}"),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
