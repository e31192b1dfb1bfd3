use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for configuration and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<hubbard_gpsr::Error> for CliError {
    fn from(e: hubbard_gpsr::Error) -> Self {
        match e {
            hubbard_gpsr::Error::GaugeFailure(_) | hubbard_gpsr::Error::KrylovFailure(_) => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}
