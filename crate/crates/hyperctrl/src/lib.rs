//! Command-line front end for `hyperctrl-core`: system files, presets, data
//! sources, thread pools and CSV/JSON reports.
//!
//! Exit codes of the `hyperctrl` binary:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | usage error (unknown subcommand, bad flags) |
//! | 2 | configuration, domain or precondition error |
//! | 3 | a solver did not converge |
//! | 4 | I/O failure while writing results |

pub mod cli;
pub mod config;
pub mod data;
pub mod output;
pub mod threads;

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Core(hyperctrl_core::Error),
    NonConvergence(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Core(hyperctrl_core::Error::NonConvergence(_)) => 3,
            CliError::Core(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(s) | CliError::Config(s) | CliError::NonConvergence(s) | CliError::Io(s) => f.write_str(s),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hyperctrl_core::Error> for CliError {
    fn from(e: hyperctrl_core::Error) -> Self {
        CliError::Core(e)
    }
}
