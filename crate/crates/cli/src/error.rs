use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: line {line}, column {column}: {message}")]
    ConfigParse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("acceptance suite failed: criteria {0:?}")]
    AcceptanceFailed(Vec<u8>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse { .. } | CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::AcceptanceFailed(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<affine_hjm::Error> for CliError {
    fn from(e: affine_hjm::Error) -> Self {
        use affine_hjm::Error as E;
        match e {
            E::Grid(_) | E::Range(_) => CliError::Config(e.to_string()),
            E::InvalidParams(_)
            | E::NotPsd { .. }
            | E::NotSymmetric { .. }
            | E::DimensionMismatch { .. }
            | E::Unsupported(_) => CliError::Validation(e.to_string()),
            E::Numerical(_) | E::EigenNoConvergence { .. } | E::Domain(_) | E::EmptyEnsemble => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
