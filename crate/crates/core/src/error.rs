use thiserror::Error;

/// Errors raised by the simulator and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("channel statistics error: {0}")]
    Statistics(String),
    #[error("acquisition failed: {0}")]
    Acquisition(String),
    #[error("filter error: {0}")]
    Filter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the `simulate` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Config(_) => 2,
            Error::Statistics(_)
            | Error::Acquisition(_)
            | Error::Filter(_)
            | Error::Numerical(_) => 3,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
