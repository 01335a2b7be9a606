use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Model(#[from] relaylab::Error),

    #[error("{0}")]
    Infeasible(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Model(relaylab::Error::Unstable { .. }) | CliError::Infeasible(_) => 3,
            CliError::Model(
                relaylab::Error::InvalidTopology(_)
                | relaylab::Error::InvalidPhy(_)
                | relaylab::Error::InvalidAccess(_),
            ) => 2,
            CliError::Validation(_) => 4,
            _ => 1,
        })
    }
}
