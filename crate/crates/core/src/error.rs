use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or malformed audio: {0}")]
    Format(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid model document: {0}")]
    Schema(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("signal has {got} samples, shorter than one analysis window of {window}")]
    SignalTooShort { got: usize, window: usize },

    #[error("unstable frame: reflection coefficient {k} at stage {stage}")]
    UnstableFrame { stage: usize, k: f64 },

    #[error("LSF conversion failed: {0}")]
    Conversion(String),

    #[error("too few samples: need at least {need}, have {have}")]
    TooFewSamples { need: usize, have: usize },

    #[error("sample {index} has zero likelihood under every component")]
    DegeneratePoint { index: usize },

    #[error("non-finite value during {0}")]
    NonFinite(String),

    #[error("{0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegeneratePoint { .. }
            | Error::NonFinite(_)
            | Error::UnstableFrame { .. }
            | Error::Conversion(_) => 3,
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
