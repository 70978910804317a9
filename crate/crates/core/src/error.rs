use thiserror::Error;

pub type Result<T> = std::result::Result<T, InertiaError>;

#[derive(Debug, Error)]
pub enum InertiaError {
    /// A value fell outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("tempo controller did not settle within {budget} events")]
    NonConvergence { budget: u64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: u64, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl InertiaError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        InertiaError::Domain(msg.into())
    }
}
