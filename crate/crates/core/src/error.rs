use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("zero vector: {0}")]
    ZeroVector(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("ENVI header {path}: missing key `{key}`")]
    MissingKey { path: PathBuf, key: String },

    #[error("unsupported {what}: {value}")]
    Unsupported { what: &'static str, value: String },

    #[error("data file {path} holds {actual} bytes, expected at least {expected}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("non-finite value at band {band}, pixel {pixel}")]
    NonFinite { band: usize, pixel: usize },

    #[error("unmixing did not converge after {iterations} iterations (worst pixel {pixel})")]
    NonConvergence { pixel: usize, iterations: usize },

    #[error("rank collapse while selecting endmember {step}: remaining pixels lie in the span of the current set")]
    RankCollapse { step: usize },

    #[error("degenerate initialization: zero simplex volume after {attempts} draws")]
    DegenerateInitialization { attempts: usize },

    #[error("{count} subsets exceed the enumeration cap of {cap}")]
    CombinatorialExplosion { count: u128, cap: u128 },

    #[error("rejection budget of {draws} draws exceeded: no endmember matrix with condition number <= {max_condition}")]
    RejectionBudget { draws: usize, max_condition: f64 },

    #[error("candidate column {column} ({name}): {source}")]
    Candidate {
        column: usize,
        name: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::RankCollapse { .. }
            | Error::DegenerateInitialization { .. }
            | Error::RejectionBudget { .. } => true,
            Error::Candidate { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
