use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate sequence: {0}")]
    DegenerateSequence(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown protocol {name:?}; valid protocols: {valid}")]
    UnknownProtocol { name: String, valid: String },

    #[error("gradient check rejected point: {0}")]
    KinkProximity(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { file: file.into(), line, message: message.into() }
    }

    /// Process exit code class for the CLI: 2 usage, 3 parse, 4 i/o, 5 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::UnknownProtocol { .. } => 2,
            Error::Parse { .. } | Error::Checkpoint(_) => 3,
            Error::Io { .. } => 4,
            Error::Verification(_) | Error::KinkProximity(_) | Error::Divergence(_) => 5,
            _ => 1,
        }
    }
}
