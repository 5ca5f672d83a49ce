use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what} = {value} is outside the valid span [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("linearization fit failed: {0}")]
    Fit(String),

    #[error("segment at SOC {soc_nominal} is unidentifiable: {reason}")]
    Unidentifiable { soc_nominal: f64, reason: String },

    #[error("true SOC left [0, 1] (reached {soc})")]
    Saturated { soc: f64 },

    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Numerical failures (saturation, NaN) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Saturated { .. } | Error::NonFinite { .. } => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
