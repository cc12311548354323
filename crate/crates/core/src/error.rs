use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A tabular or binary input did not match its schema.
    #[error("{source_name}: line {line}, column `{column}`: {message}")]
    Schema {
        source_name: String,
        line: usize,
        column: String,
        message: String,
    },

    /// A `key = value` scenario file could not be interpreted.
    #[error("{source_name}:{line}: {message}")]
    Config {
        source_name: String,
        line: usize,
        message: String,
    },

    /// No tiling of a layer fits the L1 budget.
    #[error("layer `{layer}` is infeasible: {constraint}")]
    Infeasible { layer: String, constraint: String },

    /// Mandatory phases could not be fitted into real time.
    #[error("scheduling error in cycle {cycle}: {message}")]
    Scheduling { cycle: u64, message: String },

    #[error("malformed model file: {0}")]
    ModelFile(String),

    #[error("malformed image: {0}")]
    Image(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
