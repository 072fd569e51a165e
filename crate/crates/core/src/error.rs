use thiserror::Error;

/// Errors produced by model parsing, propagation, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation; `path` points at the field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// The document could not be deserialized at all.
    #[error("schema error: {0}")]
    Schema(String),

    /// Matrix or site-count mismatch between inputs.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Integration aborted (NaN/Inf or trace drift beyond tolerance).
    #[error("numerical abort at t = {last_good_time}: {message}")]
    Numerical {
        message: String,
        last_good_time: f64,
    },

    /// An operation was called with arguments outside its contract.
    #[error("{0}")]
    Invalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file (trajectory, currents, graph) is malformed.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
