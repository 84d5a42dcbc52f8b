use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed configuration, unwritable output.
    Config(String),
    /// The numerical pipeline failed after the inputs were accepted.
    Numeric(dorder::Error),
    /// `--verify` found a tolerance violation.
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Verify(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Library errors raised while the run is being set up are the caller's
    /// fault; routing them here keeps exit code 2 for genuine numeric trouble.
    pub fn setup(context: &str, err: dorder::Error) -> Self {
        CliError::Config(format!("{context}: {err}"))
    }
}

impl From<dorder::Error> for CliError {
    fn from(err: dorder::Error) -> Self {
        use dorder::Error as E;
        match err {
            E::UnboundParameter { .. } | E::UnsupportedForm(_) | E::InvalidInput { .. } => {
                CliError::Config(err.to_string())
            }
            other => CliError::Numeric(other),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(e) => write!(f, "numeric failure: {e}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
