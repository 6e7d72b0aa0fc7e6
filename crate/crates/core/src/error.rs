use thiserror::Error;

/// Errors raised anywhere in the fitting pipeline.
///
/// The variants map onto the process exit codes used by the command line
/// tool: configuration problems exit with 2, data problems with 3 and
/// numerical failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("post-processing error: {0}")]
    Postprocess(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Prefixes the message with location information, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
            Error::Postprocess(m) => Error::Postprocess(format!("{ctx}: {m}")),
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) | Error::Json(_) | Error::Postprocess(_) => 3,
            Error::Domain(_) | Error::Numerical(_) => 4,
        }
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
