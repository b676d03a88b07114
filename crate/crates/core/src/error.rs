use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A time that must sit on the mesh does not.
    Alignment { what: &'static str, time: f64 },
    /// Lookup outside the interval a function is defined on.
    Domain { what: &'static str, time: f64 },
    /// Dimensions of two inputs disagree.
    Dimension { what: &'static str, expected: usize, found: usize },
    /// Malformed problem data.
    Invalid(String),
    NonFinite { what: &'static str, time: f64 },
    PicardNotConverged { iterations: usize, increment: f64 },
    /// The terminal constraints are violated by the reference process.
    InfeasibleReference { index: usize, value: f64 },
    /// A fundamental-matrix query needs storage that was not requested.
    NotStored { t: usize, s: usize },
    IllConditioned { what: &'static str, value: f64 },
    LpIterationLimit,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Alignment { what, time } => {
                write!(f, "alignment error: {what} at t = {time} is not a mesh node")
            }
            Error::Domain { what, time } => write!(f, "domain error: {what} undefined at t = {time}"),
            Error::Dimension { what, expected, found } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, found {found}")
            }
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::NonFinite { what, time } => write!(f, "non-finite value in {what} at t = {time}"),
            Error::PicardNotConverged { iterations, increment } => write!(
                f,
                "Picard iteration did not converge after {iterations} iterations (last increment {increment:e})"
            ),
            Error::InfeasibleReference { index, value } => write!(
                f,
                "reference process violates terminal constraint g^{index} (value {value:e})"
            ),
            Error::NotStored { t, s } => {
                write!(f, "fundamental matrix entry at node pair ({t}, {s}) was not stored")
            }
            Error::IllConditioned { what, value } => {
                write!(f, "ill-conditioned {what} (indicator {value:e})")
            }
            Error::LpIterationLimit => write!(f, "simplex iteration limit reached"),
        }
    }
}

impl core::error::Error for Error {}
