use std::process::ExitCode;

use iqn_rnn::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 2 configuration, 3 data, 4 numerical, 1 anything else.
    pub fn exit_code(&self) -> ExitCode {
        let code = match self {
            CliError::Config(_) => 2,
            CliError::GradCheck(_) => 4,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                Error::Config(_) => 2,
                Error::Data(_)
                | Error::Domain(_)
                | Error::EmptyDataset(_)
                | Error::Checkpoint(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_) => 3,
                Error::Numerical(_) => 4,
                _ => 1,
            },
        };
        ExitCode::from(code)
    }
}
