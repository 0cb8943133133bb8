use thiserror::Error;

/// Command failures, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(auxetic_core::error::Error),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<auxetic_core::error::Error> for CliError {
    fn from(e: auxetic_core::error::Error) -> Self {
        use auxetic_core::error::Error;
        match e {
            // bad inputs that only the core can detect (filter radius, mesh sizes, …)
            Error::InvalidInput(m) | Error::Mesh(m) => CliError::Config(m),
            other => CliError::Solver(other),
        }
    }
}
