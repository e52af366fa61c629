use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid radar configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("frame dimension mismatch: expected {expected_rx}x{expected_samples}, got {rx}x{samples}")]
    DimensionMismatch {
        expected_rx: usize,
        expected_samples: usize,
        rx: usize,
        samples: usize,
    },

    #[error("no tag detected in channel at {f_m} Hz")]
    NoTagDetected { f_m: f64 },

    #[error("ambiguous peak pairing in channel at {f_m} Hz")]
    AmbiguousPair { f_m: f64 },

    #[error("missing detection at chirp {k}")]
    Gap { k: u64 },

    #[error("elevation tracking lost at chirp {k}")]
    TrackingLost { k: u64 },

    #[error("malformed frame dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable kind, used by the CLI error reporter.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::Domain(_) => "domain",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NoTagDetected { .. } => "no_tag_detected",
            Error::AmbiguousPair { .. } => "ambiguous_pair",
            Error::Gap { .. } => "gap",
            Error::TrackingLost { .. } => "tracking_lost",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
