//! Crate-wide error type.
//!
//! Two classes matter to the CLI: configuration errors (bad config file,
//! invalid field value, malformed report input) exit with code 2, everything
//! else (I/O, shape mismatches, failed numeric preconditions) exits with 1.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// User-facing configuration problem: unknown key, unparsable value,
    /// invalid combination. Maps to exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor or graph shape mismatch. The message names the operation and
    /// both offending dimensions.
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Lookup of a parameter, scene, or adapter target that does not exist.
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    /// Invalid argument to a numeric routine (bad step size, zero rank,
    /// empty dataset, out-of-range k).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Grid planning failed: no traversable route between the endpoints.
    #[error("no path from ({},{}) to ({},{})", from.0, from.1, to.0, to.1)]
    NoPath { from: (usize, usize), to: (usize, usize) },

    /// Training aborted on a non-finite loss.
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, value: f64 },

    /// Checkpoint or dataset file with an unsupported schema version.
    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    /// A benchmark cell failed; wraps the underlying error with the cell key.
    #[error("cell {cell} failed: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error in {path}: {detail}")]
    Csv { path: String, detail: String },
}

impl Error {
    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: &std::path::Path, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.display().to_string(),
            source,
        }
    }
}
