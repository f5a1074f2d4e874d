use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matchings require M <= N (got {nodes} nodes, {channels} channels)")]
    MatchingInfeasible { nodes: usize, channels: usize },

    #[error("{what} must be positive (got {value})")]
    NonPositive { what: &'static str, value: f64 },

    #[error("{what} must be finite (got {value})")]
    NonFinite { what: &'static str, value: f64 },

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("node and target positions coincide; angle of arrival is undefined")]
    CoincidentPositions,

    #[error("matching enumeration would produce {count} matchings (cap {cap})")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("innovation covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("measurement from node {node} at CPI {cpi} is invalid")]
    InvalidMeasurement { node: usize, cpi: usize },

    #[error("policy {policy} node {node}: {detail}")]
    MissingFeedback {
        policy: &'static str,
        node: usize,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("compare requires identical world parameters: {0}")]
    WorldMismatch(String),

    #[error("config file {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config file {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("output {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that stem from user configuration rather than from
    /// executing a valid configuration.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::MatchingInfeasible { .. }
                | Error::NonPositive { .. }
                | Error::NonFinite { .. }
                | Error::OutOfRange { .. }
                | Error::Config(_)
                | Error::WorldMismatch(_)
                | Error::ConfigRead { .. }
                | Error::ConfigParse { .. }
        )
    }
}

pub(crate) fn ensure_positive(what: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFinite { what, value });
    }
    if value <= 0.0 {
        return Err(Error::NonPositive { what, value });
    }
    Ok(value)
}
