use thiserror::Error;

/// CLI failure categories; each maps to a process exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Hypothesis(_) => 3,
            CliError::Runtime(_) => 4,
            CliError::Assertion(_) => 5,
        }
    }

    /// Hypothesis errors keep their category, parameter errors are config
    /// problems, and everything else happened at run time.
    pub fn from_core(e: duffing_core::Error) -> Self {
        match e {
            duffing_core::Error::Hypothesis(m) => CliError::Hypothesis(m),
            duffing_core::Error::Parameter(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{context}: {e}"))
    }
}
