use taskalloc_core::Error as CoreError;
use taskalloc_oracle::OracleError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Oracle(#[from] OracleError),

    #[error("cannot write output: {0}")]
    Output(String),

    #[error("validation failed: {0}")]
    Mismatch(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl CliError {
    /// Process exit status: 2 input errors, 3 infeasible load, 4 numeric
    /// failures, 5 validation mismatch.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Syntax { .. } | CliError::Invalid(_) => 2,
            CliError::Core(e) | CliError::Oracle(OracleError::Core(e)) => core_code(e),
            CliError::Oracle(
                OracleError::TooManyServers { .. } | OracleError::InvalidConfig(_),
            ) => 2,
            CliError::Oracle(OracleError::NoConvergence { .. }) => 4,
            CliError::Output(_) => 4,
            CliError::Mismatch(_) => 5,
        }
    }
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::InfeasibleLoad { .. } | CoreError::Domain { .. } => 3,
        CoreError::InvalidServer(_)
        | CoreError::InvalidScenario(_)
        | CoreError::InvalidConfig(_)
        | CoreError::UnsupportedModel(_) => 2,
        CoreError::BelowFloor { .. }
        | CoreError::Saturation { .. }
        | CoreError::InversionFailure(_) => 4,
    }
}
