//! File formats, benchmark and command-line front end for `rankmean-core`.

pub mod bench;
pub mod cli;
pub mod error;
pub mod format;
pub mod trajectory;

pub use error::CliError;
