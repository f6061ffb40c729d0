//! Failure classes of a run and their exit codes.

use std::path::PathBuf;
use std::process::ExitCode;

use schrodinger_bridge::Error as CoreError;
use thiserror::Error;

pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_IO: u8 = 4;
pub const EXIT_NUMERIC: u8 = 5;
pub const EXIT_VALIDATION: u8 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(", line {l}")).unwrap_or_default())]
    ConfigParse {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}, line {line}: {message}", path.display())]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("validation: {0}")]
    Validation(String),

    #[error("unknown {what} {name:?}")]
    Unknown { what: &'static str, name: String },

    #[error("{failed} of {total} checks failed: {names}")]
    ChecksFailed {
        failed: usize,
        total: usize,
        names: String,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigParse { .. } => EXIT_CONFIG,
            CliError::Io { .. } | CliError::MissingFile(_) => EXIT_IO,
            CliError::Csv { .. } | CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Unknown { .. } => EXIT_USAGE,
            CliError::ChecksFailed { .. } => EXIT_CHECK_FAILED,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::CheckFailed { .. } => EXIT_CHECK_FAILED,
        CoreError::InvalidGrid(_)
        | CoreError::LengthMismatch { .. }
        | CoreError::GridMismatch
        | CoreError::Normalization { .. }
        | CoreError::TimeOrdering { .. }
        | CoreError::Incompatible(_)
        | CoreError::InvalidBoundary(_)
        | CoreError::InvalidArgument(_) => EXIT_VALIDATION,
        CoreError::NonFinite { .. }
        | CoreError::PositivityViolation { .. }
        | CoreError::NonConvergence { .. }
        | CoreError::PropagationConsistency { .. }
        | CoreError::BoundaryLeak { .. }
        | CoreError::DivisionGuard(_) => EXIT_NUMERIC,
    }
}

/// Exit code of an error chain: the first classified cause wins, anything else is I/O.
pub fn exit_code_of(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return ExitCode::from(e.exit_code());
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return ExitCode::from(core_exit_code(e));
        }
    }
    ExitCode::from(EXIT_IO)
}
