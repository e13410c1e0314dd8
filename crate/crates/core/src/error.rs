use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library and the command-line front end.
///
/// `Input` covers malformed data (counts, p-values, files); `Config` covers
/// parameters that are individually well-formed but inconsistent with the
/// data or with each other (tuning parameters, procedure tags, scenarios).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("tuning parameter {tau} outside [nu, 1) with nu = {nu}")]
    TauOutOfRange { tau: f64, nu: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the supplied data rather than by parameters.
    pub fn is_input(&self) -> bool {
        matches!(self, Error::Input(_) | Error::Parse { .. } | Error::Io(_))
    }
}
