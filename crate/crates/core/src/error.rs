use thiserror::Error;

/// Errors raised by model validation, the analytic pipeline, the inverter and
/// the simulators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unstable model: total load rho = {rho} (must be < 1)")]
    Unstable { rho: f64 },

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("degenerate class: {0}")]
    DegenerateClass(String),

    #[error("mean values unavailable: {0}")]
    MeansUnavailable(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("probability {p} lies at or below the atom at zero (mass {atom})")]
    Atom { p: f64, atom: f64 },

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("comparison refused: {0}")]
    ComparisonRefused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
