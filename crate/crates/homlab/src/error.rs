//! Crate-wide error type. Every fallible operation returns `Result<T, Error>`.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented range or relation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A quantum state or model parameter is outside its admissible set.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The requested coincidence pairing does not exist for this topology.
    #[error("pairing {pairing} is not defined for topology {topology}")]
    PairingMismatch { pairing: String, topology: String },

    /// Tag file does not start with the expected magic bytes.
    #[error("not a tag file: bad magic")]
    BadMagic,

    /// Tag file declares a format version this build does not understand.
    #[error("unsupported tag file version {0}")]
    UnsupportedVersion(u16),

    /// Tag file header is shorter than the fixed header size.
    #[error("truncated tag file header: {got} of {want} bytes")]
    TruncatedHeader { got: usize, want: usize },

    /// Tag file ends inside a record.
    #[error("truncated tag record {index}: {got} of {want} bytes")]
    TruncatedRecord { index: u64, got: usize, want: usize },

    /// Tag file has bytes left over after the declared record count.
    #[error("{0} trailing bytes after last declared record")]
    TrailingBytes(u64),

    /// A stream operation requires time-ordered input and found a violation.
    #[error("tag stream not sorted at record {index}: {prev} then {next}")]
    UnsortedStream { index: usize, prev: u64, next: u64 },

    /// The fitter exhausted its iteration budget. `last` is the final iterate.
    #[error("fit did not converge within {iterations} iterations")]
    FitDidNotConverge {
        iterations: usize,
        last: Box<crate::fringe::FringeFit>,
    },

    /// Curve is unusable for fitting (too few points, bad ordering, ...).
    #[error("invalid fringe curve: {0}")]
    InvalidCurve(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(String),
}
