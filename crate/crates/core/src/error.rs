use std::io;

use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its contract. `field` is a dotted path
    /// into the scenario (or the name of the offending parameter).
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    /// A feature needs a measurement the flow cannot provide.
    #[error("measurement unavailable for feature `{feature}`: {message}")]
    MeasurementUnavailable { feature: String, message: String },

    #[error("training failed: {0}")]
    Training(String),

    /// Scores computed against different feature catalogs were compared.
    #[error("tool scores come from different catalogs ({0} vs {1})")]
    CatalogMismatch(String, String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the scenario file rather than by a run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
