use std::io;

use thiserror::Error;

/// Every failure the codec can surface. The variant doubles as the
/// machine-readable category reported by the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("stream error: {0}")]
    Stream(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Short stable identifier for the error family.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Training(_) => "training",
            Error::Stream(_) => "stream",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Pipeline(_) => "pipeline",
            Error::Metric(_) => "metric",
            Error::Io(_) => "io",
        }
    }

    /// Prefix the message with the encoder stage that produced it.
    pub fn in_stage(self, stage: &str) -> Error {
        match self {
            Error::Training(m) => Error::Training(format!("[{stage}] {m}")),
            Error::Dimension(m) => Error::Dimension(format!("[{stage}] {m}")),
            Error::Config(m) => Error::Config(format!("[{stage}] {m}")),
            Error::Pipeline(m) => Error::Pipeline(format!("[{stage}] {m}")),
            Error::Stream(m) => Error::Stream(format!("[{stage}] {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(format!($($arg)*)) };
}
pub(crate) use dim_err;
