use gridcast_core::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("missing prerequisite: {0}")]
    Missing(String),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 2 for bad input, 3 for a missing prerequisite, 4 for failures while working.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Runtime(_) => 4,
            CliError::Core(e) => match e {
                Error::Numeric(_) | Error::TotalConflict(_) | Error::Io { .. } => 4,
                _ => 2,
            },
        }
    }
}
