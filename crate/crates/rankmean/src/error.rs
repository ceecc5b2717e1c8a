use std::path::{Path, PathBuf};

use rankmean_core::ErrorKind;

/// Exit status: success.
pub const EXIT_OK: i32 = 0;
/// Exit status: a checked property failed.
pub const EXIT_PROPERTY: i32 = 1;
/// Exit status: bad input or violated precondition.
pub const EXIT_PRECONDITION: i32 = 2;
/// Exit status: an iterative scheme did not converge.
pub const EXIT_CONVERGENCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] rankmean_core::Error),
}

impl CliError {
    pub fn usage(message: &str) -> Self {
        CliError::Usage(message.to_owned())
    }

    pub fn parse(line: usize, message: &str) -> Self {
        CliError::Parse {
            line,
            message: message.to_owned(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input | ErrorKind::Precondition => EXIT_PRECONDITION,
                ErrorKind::Convergence | ErrorKind::Numerical => EXIT_CONVERGENCE,
            },
            _ => EXIT_PRECONDITION,
        }
    }

    /// Stable tag printed in the machine-readable error line.
    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Parse { .. } => "parse",
            CliError::Io { .. } => "io",
            CliError::Core(e) => e.reason(),
        }
    }
}
