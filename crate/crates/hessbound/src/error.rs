use std::path::PathBuf;

use hessbound_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: line {line}: expected {expected} columns, found {got}")]
    WrongColumnCount {
        path: PathBuf,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}: bad IDX magic {got:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        got: u32,
    },
    #[error("{path}: file is truncated ({what})")]
    TruncatedFile { path: PathBuf, what: String },
    #[error("digit {digit}: {wanted} samples requested but only {available} available")]
    NotEnoughSamples {
        digit: u8,
        wanted: usize,
        available: usize,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit status for an error: 2 for configuration and usage, 3 for
/// data and IO, 4 for numeric failures.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => EXIT_CONFIG,
            Error::Core(e) => match e {
                CoreError::InvalidConfig(_)
                | CoreError::TooLarge { .. }
                | CoreError::UnsupportedArchitecture(_) => EXIT_CONFIG,
                CoreError::DimMismatch { .. }
                | CoreError::ShapeMismatch { .. }
                | CoreError::InvalidLabel { .. }
                | CoreError::EmptyClass(_)
                | CoreError::WrongDim { .. }
                | CoreError::ClassTooSmall { .. } => EXIT_DATA,
                CoreError::ZeroVector
                | CoreError::NotSymmetric { .. }
                | CoreError::Diverged { .. }
                | CoreError::AuxTrainingFailed { .. }
                | CoreError::NoProgress { .. }
                | CoreError::NoConvergence
                | CoreError::NonFinite(_) => EXIT_NUMERIC,
            },
            _ => EXIT_DATA,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
