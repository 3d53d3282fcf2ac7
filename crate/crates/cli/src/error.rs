use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Model(#[from] iagflow::Error),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 2 for bad input, 3 for samples that blew up.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Model(iagflow::Error::Diverged { .. }) => 3,
            _ => 2,
        }
    }
}
