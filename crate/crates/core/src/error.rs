use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },

    #[error("edge file references unknown node id `{id}` (line {line})")]
    UnknownNode { id: String, line: usize },

    #[error("duplicate node id `{0}` in covariate file")]
    DuplicateNode(String),

    #[error("missing value for `{field}` of node `{id}`")]
    MissingValue { id: String, field: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("probability {value} at dyad {dyad} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange { dyad: usize, value: f64 },

    #[error("rank-deficient design: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("divergence undefined: {0}")]
    Domain(String),

    #[error("baseline fit is degenerate; nominal block probabilities are unavailable")]
    DegenerateBaseline,

    #[error("{0} is constant; correlation/variance ratio undefined")]
    ConstantSequence(&'static str),

    #[error("covariate `{0}` is not a column of the design")]
    UnknownCovariate(String),

    #[error("p-values are unavailable for fits with free node effects")]
    NoAsymptotics,
}

impl Error {
    /// Name of the module the failure originated in, for diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Io { .. }
            | Error::Malformed { .. }
            | Error::UnknownNode { .. }
            | Error::DuplicateNode(_)
            | Error::MissingValue { .. }
            | Error::InvalidInput(_) => "netdata",
            Error::DimensionMismatch { .. } | Error::ProbabilityOutOfRange { .. } => "model",
            Error::RankDeficient { .. } | Error::InvalidConfig(_) => "inference",
            Error::Domain(_) => "confidence",
            Error::DegenerateBaseline
            | Error::ConstantSequence(_)
            | Error::UnknownCovariate(_)
            | Error::NoAsymptotics => "assess",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
