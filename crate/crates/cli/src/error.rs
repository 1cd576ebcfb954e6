use thiserror::Error;

/// Failure of a command, mapped to the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", config_message(key, *line, message))]
    Config { key: String, line: Option<usize>, message: String },
    #[error(transparent)]
    Core(#[from] quench::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

fn config_message(key: &str, line: Option<usize>, message: &str) -> String {
    match (key.is_empty(), line) {
        (true, Some(l)) => format!("config error at line {l}: {message}"),
        (true, None) => format!("config error: {message}"),
        (false, Some(l)) => format!("config error at line {l}, key `{key}`: {message}"),
        (false, None) => format!("config error, key `{key}`: {message}"),
    }
}

impl CliError {
    /// 2 for invalid input, 3 for capacity limits, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io(_) | CliError::Csv(_) => 2,
            CliError::Core(e) => match e {
                quench::Error::Capacity(_) => 3,
                quench::Error::Numerical(_) | quench::Error::Consistency(_) => 4,
                quench::Error::InvalidArgument(_) | quench::Error::Parse(_) | quench::Error::Io(_) => 2,
            },
        }
    }
}
