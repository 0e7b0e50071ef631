use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (non-positive
    /// capacitance or frequency, empty band list, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// `Z + Z0` vanished, so the reflection coefficient is undefined.
    #[error("degenerate reflection: |Z + Z0| = {0:e}")]
    Degenerate(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An indicator column marks more than one band as served.
    #[error("indicator column {element} serves {count} bands (at most one allowed)")]
    Sparsity { element: usize, count: usize },

    #[error("infeasible SINR targets: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("invalid configuration file: {0}")]
    Toml(#[from] toml::de::Error),
}
