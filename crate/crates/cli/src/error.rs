use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent input; the message names the field.
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    NonConvergence(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn input(field: &str, msg: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{field}: {msg}"))
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::NonConvergence(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
