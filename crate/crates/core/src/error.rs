use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("controller synthesis failed: {0}")]
    Synthesis(String),

    #[error("estimator sequencing error: expected round {expected}, got {actual}")]
    Sequencing { expected: u64, actual: u64 },

    #[error("contract violation at round {round}, agent {agent}: {message}")]
    Contract { round: u64, agent: usize, message: String },

    #[error("trace is too short: {len} rounds, need at least {needed}")]
    TraceTooShort { len: usize, needed: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn dimension(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::Csv(_) => 1,
            Error::Dimension { .. } => 1,
            Error::Synthesis(_) | Error::Sequencing { .. } | Error::Contract { .. } | Error::TraceTooShort { .. } => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
