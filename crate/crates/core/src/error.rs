use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input has the wrong length or contains out-of-alphabet values.
    #[error("input shape: {0}")]
    Shape(String),
    /// Argument outside the mathematical domain of an operation.
    #[error("domain: {0}")]
    Domain(String),
    /// Scenario or drone set violates a modelling assumption.
    #[error("configuration: {0}")]
    Config(String),
    /// Requested method cannot handle this problem size.
    #[error("capability: {0}")]
    Capability(String),
    /// The estimator could not produce an estimate for this window.
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
