use gridsplit::data::DataError;
use gridsplit::eval::EvalError;
use gridsplit::protocol::ProtocolError;
use gridsplit::splitlearn::SplitError;
use std::process::ExitCode;

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Protocol(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Protocol(_) => 2,
            CliError::Data(_) => 3,
        })
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Protocol(m) | CliError::Data(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        CliError::Protocol(e.to_string())
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::Protocol(p) => p.into(),
            SplitError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Split(s) => s.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}
