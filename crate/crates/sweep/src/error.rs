use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("config field `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("output error: {0}")]
    Output(String),

    #[error(transparent)]
    Core(#[from] ptmp_core::Error),
}

pub type Result<T> = std::result::Result<T, SweepError>;
