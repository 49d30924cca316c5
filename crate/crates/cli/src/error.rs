use std::path::{Path, PathBuf};

use isodr_core::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{}: {source}", path.display())]
    InFile { path: PathBuf, source: Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn in_file(path: &Path, source: Error) -> Self {
        match source {
            Error::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            source => CliError::InFile { path: path.to_path_buf(), source },
        }
    }

    /// 2: configuration, 3: data or format, 4: numeric or training.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) | CliError::InFile { source: e, .. } => core_exit_code(e),
            CliError::Io { .. } | CliError::Format { .. } => 3,
        }
    }
}

fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric { .. } | Error::Training { .. } | Error::DegenerateVariance => 4,
        Error::EmptyInput(_)
        | Error::InsufficientData { .. }
        | Error::Value(_)
        | Error::ZeroNorm { .. }
        | Error::Shape { .. }
        | Error::Integrity(_)
        | Error::Lookup(_)
        | Error::Parse { .. } => 3,
    }
}
