use alloc::string::String;
use core::fmt;

use crate::broad_solver::PicardReport;

/// Failure categories shared by every module.
///
/// The CLI maps `Domain`, `Precondition` and `Config` to exit code 2 and
/// `NonConvergence` to exit code 3.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input outside the mathematical domain (non-positive speed, singular matrix, ...).
    Domain(String),
    /// A structural hypothesis required by the operation does not hold.
    Precondition(String),
    /// Inconsistent discretisation or configuration values.
    Config(String),
    /// Picard iteration stopped without meeting the tolerance.
    NonConvergence(PicardReport),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(s) => write!(f, "domain error: {s}"),
            Error::Precondition(s) => write!(f, "precondition failed: {s}"),
            Error::Config(s) => write!(f, "configuration error: {s}"),
            Error::NonConvergence(r) => write!(
                f,
                "Picard iteration did not converge after {} iterations (last difference {:.3e})",
                r.iterations, r.final_difference
            ),
        }
    }
}

impl core::error::Error for Error {}
