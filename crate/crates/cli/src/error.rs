use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, malformed problem data or a violated assumption.
    #[error("{0}")]
    Validation(String),
    /// A numerical solve broke down.
    #[error("{0}")]
    Solver(String),
    /// Reading, writing or parsing failed.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<dpsens::Error> for CliError {
    fn from(e: dpsens::Error) -> Self {
        use dpsens::Error as E;
        let msg = e.to_string();
        match e {
            E::Parse(_) => CliError::Io(msg),
            E::SingularKkt | E::IndefiniteW { .. } | E::SolverDiverged { .. } => CliError::Solver(msg),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
