use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A physical quantity outside its domain (e.g. a non-positive distance).
    Domain(&'static str),
    /// A configuration value that fails validation; carries the offending key.
    Config { key: &'static str, reason: &'static str },
    /// Deployment could not place all subnetworks without overlap.
    Packing { placed: usize, wanted: usize },
    IndexOutOfRange { index: usize, len: usize },
    DimensionMismatch { expected: usize, got: usize },
    /// Popping from an empty packet buffer.
    EmptyBuffer,
    EpisodeDone,
    /// Training produced a non-finite loss.
    Divergence { update: usize, what: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(what) => write!(f, "domain error: {what}"),
            Error::Config { key, reason } => write!(f, "invalid config `{key}`: {reason}"),
            Error::Packing { placed, wanted } => write!(
                f,
                "could not place {wanted} non-overlapping subnetworks (placed {placed})"
            ),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::EmptyBuffer => write!(f, "pop on empty packet buffer"),
            Error::EpisodeDone => write!(f, "step called on a finished episode"),
            Error::Divergence { update, what } => {
                write!(f, "non-finite {what} at update {update}")
            }
        }
    }
}

impl core::error::Error for Error {}
