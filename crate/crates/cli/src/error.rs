use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Data(_) => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Sorts a library error into the matching exit class; `path` names the
    /// file being processed, if any.
    pub fn from_core(err: offset_core::Error, path: Option<&Path>) -> Self {
        use offset_core::Error as E;
        let located = |msg: String| match path {
            Some(p) => format!("{}: {}", p.display(), msg),
            None => msg,
        };
        match err {
            E::Io(source) => CliError::Io {
                path: path.map(Path::to_path_buf).unwrap_or_default(),
                source,
            },
            E::InvalidConfig(_) | E::InvalidDimensions(_) | E::InvalidConfidence(_) => {
                CliError::Config(located(err.to_string()))
            }
            other => CliError::Data(located(other.to_string())),
        }
    }
}
