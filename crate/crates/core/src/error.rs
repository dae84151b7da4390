use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("assembly integrity: {0}")]
    Assembly(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("non-finite nonlinearity value at amplitude {amplitude}")]
    NonFinite { amplitude: f64 },

    #[error("modal amplitude {amplitude} exceeded blow-up guard at t = {t}")]
    BlowUp { t: f64, amplitude: f64 },

    #[error("Newton iteration failed to converge at t = {t} (dt = {dt}, residual {residual})")]
    Step { t: f64, dt: f64, residual: f64 },

    #[error("integration failed at t = {t}: {source}")]
    Integration {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(expected: usize, found: usize) -> Self {
        Error::Dimension { expected, found }
    }
}
