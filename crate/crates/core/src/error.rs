use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// The CLI maps `Input`/`Validation`/`Parse`/`Io` to exit code 2 and the
/// numerical variants to exit code 3; see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("headroom violation: {0}")]
    Headroom(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse(_) | Error::Validation(_) | Error::Input(_) => 2,
            _ => 3,
        }
    }

    /// Prefix the message with the sweep coordinate that failed.
    pub(crate) fn at(self, what: &str, x: f64) -> Error {
        let wrap = |m: String| format!("{what} = {x}: {m}");
        match self {
            Error::Domain(m) => Error::Domain(wrap(m)),
            Error::Precondition(m) => Error::Precondition(wrap(m)),
            Error::Headroom(m) => Error::Headroom(wrap(m)),
            Error::NoConvergence(m) => Error::NoConvergence(wrap(m)),
            other => other,
        }
    }
}
