use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a subcommand. Each variant maps to a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
    #[error("{0}")]
    Analysis(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Exit status of a successful run.
pub const EXIT_OK: i32 = 0;
/// Reading or writing a file failed for a reason other than it not existing.
pub const EXIT_IO: i32 = 1;
/// Bad command line. Also what clap uses for its own argument errors.
pub const EXIT_USAGE: i32 = 2;
/// A named input file or run directory does not exist or is incomplete.
pub const EXIT_MISSING_INPUT: i32 = 3;
/// An input could not be parsed, or a JSON document has the wrong kind or
/// schema version.
pub const EXIT_PARSE: i32 = 4;
/// Input parsed but failed validation: out-of-range values, non-monotonic
/// timestamps, uncovered epoch windows, invalid simulation specs.
pub const EXIT_VALIDATION: i32 = 5;
/// Inputs are valid but the requested analysis is not defined on them.
pub const EXIT_ANALYSIS: i32 = 6;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::MissingInput(_) => EXIT_MISSING_INPUT,
            CliError::Parse { .. } => EXIT_PARSE,
            CliError::Validation { .. } => EXIT_VALIDATION,
            CliError::Analysis(_) => EXIT_ANALYSIS,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub(crate) fn parse(path: impl AsRef<Path>, message: impl ToString) -> Self {
        CliError::Parse {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }

    pub(crate) fn validation(path: impl AsRef<Path>, message: impl ToString) -> Self {
        CliError::Validation {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput(path.as_ref().display().to_string())
        } else {
            CliError::Io {
                path: path.as_ref().to_path_buf(),
                source,
            }
        }
    }
}

impl From<(&Path, gpuscale::telemetry::ParseError)> for CliError {
    fn from((path, e): (&Path, gpuscale::telemetry::ParseError)) -> Self {
        use gpuscale::telemetry::ParseError as P;
        match e {
            P::OutOfRange { .. }
            | P::NonMonotonic { .. }
            | P::EmptyWindow { .. }
            | P::DuplicateEpoch { .. }
            | P::Overlap { .. }
            | P::OutOfOrder { .. } => CliError::validation(path, e),
            P::Io(msg) => CliError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(msg),
            },
            _ => CliError::parse(path, e),
        }
    }
}
