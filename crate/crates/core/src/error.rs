use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("insufficient identities: need at least {need}, got {got}")]
    InsufficientIdentities { need: usize, got: usize },

    #[error("infeasible identity-disjoint split: {0}")]
    InfeasibleSplit(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("missing file {path}")]
    MissingFile { path: PathBuf },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("config/checkpoint incompatibility: {0}")]
    Incompatible(String),

    #[error("image decode error on {path}: {message}")]
    Decode { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Process exit status for the CLI; each failure class gets its own.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::MissingFile { .. } => 3,
            Error::Io { .. } => 4,
            Error::CrcMismatch { .. } => 5,
            Error::Format(_) | Error::Decode { .. } => 6,
            Error::Incompatible(_) => 7,
            Error::Divergence { .. } | Error::NonFinite(_) => 8,
            Error::InsufficientIdentities { .. } | Error::InfeasibleSplit(_) | Error::Empty(_) => 9,
            Error::Shape { .. } => 10,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }
}
