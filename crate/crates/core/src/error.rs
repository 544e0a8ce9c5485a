use thiserror::Error;

/// Errors raised by model construction, validation and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter or control value is outside its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// One of the three comfort-feasibility assumptions fails for a nanogrid.
    #[error("assumption ({label}) violated for nanogrid {nanogrid}: {detail}")]
    Assumption { label: char, nanogrid: usize, detail: String },

    /// A decision variable lies outside its feasible set.
    #[error("domain error: {0}")]
    Domain(String),

    /// The scenario data is inconsistent or leaves an empty feasible set.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Malformed scenario file.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    /// A guarantee that should hold by construction was observed to fail.
    #[error("invariant failure at slot {slot}: {detail}")]
    Invariant { slot: usize, detail: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
