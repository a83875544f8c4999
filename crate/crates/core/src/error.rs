use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("cannot parse distribution literal `{literal}`: {reason}")]
    ParseLiteral { literal: String, reason: String },

    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("parameter mismatch for {family}: {reason}")]
    ParameterMismatch { family: String, reason: String },

    #[error("{family} is {actual}, classifier requires {required}")]
    WrongMonotonicity {
        family: String,
        actual: String,
        required: String,
    },

    #[error("increasing prefix [0, gamma) is unknown for {0}")]
    MissingGamma(String),

    #[error("supremum of log fitness is unbounded for {0}")]
    UnboundedSup(String),

    #[error("trajectory was recorded as {0}; a full path or on-line measure is required")]
    InsufficientRecord(String),

    #[error("map has no interior maximum on (0, {x_max}]")]
    NoInteriorMaximum { x_max: f64 },

    #[error("chain graph would need {nodes} nodes (limit {limit})")]
    GraphTooLarge { nodes: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input rather than by a failure at run time.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidDistribution(_)
                | Error::ParseLiteral { .. }
                | Error::UnknownFamily(_)
                | Error::ParameterMismatch { .. }
                | Error::WrongMonotonicity { .. }
                | Error::MissingGamma(_)
                | Error::Validation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
