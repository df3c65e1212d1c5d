use std::io;
use std::path::PathBuf;

use szsc_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error("unsupported archive format version {0}")]
    Version(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Io { .. } => "E_IO",
            Self::Parse { .. } => "E_PARSE",
            Self::Invalid(_) => "E_INVALID",
            Self::Usage(_) => "E_USAGE",
            Self::Version(_) => "E_VERSION",
            Self::Core(e) => match e {
                CoreError::Shape { .. } => "E_SHAPE",
                CoreError::Input(_) => "E_INPUT",
                CoreError::Singular { .. } => "E_SINGULAR",
                CoreError::NotConverged { .. } => "E_NOT_CONVERGED",
                CoreError::NonFinite { .. } => "E_NON_FINITE",
                CoreError::LambdaOutOfRange(_) => "E_LAMBDA",
                CoreError::EmptyCoverage => "E_EMPTY_COVERAGE",
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
