//! Scenario-driven front end: scenario files, artifact I/O, SVG plots and
//! the subcommand bodies behind the `feedopt` binary.

pub mod artifacts;
pub mod commands;
pub mod plot;
pub mod scenario;

use feedopt::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error(transparent)]
    Core(#[from] Error),
    /// The command ran but its check did not pass.
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    /// 2 for bad input, 3 for numerical or synthesis failure, 4 for divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Io(..) => 2,
            CliError::Failed(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::Core(e) => match e {
                Error::InvalidInput(_) | Error::Precondition(_) | Error::Unsupported(_) => 2,
                Error::Diverged(_) => 4,
                _ => 3,
            },
        }
    }
}
