use thiserror::Error;

/// Failures surfaced by the command-line driver, mapped onto stable exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Library(#[from] mixflow::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Library(e) if e.is_numerical() => 3,
            CliError::Library(_) => 2,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_string(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
