use thiserror::Error;

/// Errors surfaced by the library and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("rollout diverged at step {step}")]
    Diverged { step: usize },

    #[error("ill-conditioned normal equations (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("controller synthesis failed: {0}")]
    SynthesisFailed(String),

    #[error("model-task Hessian failed at coordinate pair ({i}, {j}): {reason}")]
    HessianFailed { i: usize, j: usize, reason: String },

    #[error("experiment design failed: {0}")]
    DesignFailed(String),

    #[error("MinEig did not reach its eigenvalue target after {episodes} episodes (best lambda_min {best_lambda_min:.4e})")]
    MinEigTimeout { best_lambda_min: f64, episodes: usize },

    #[error("episode budget exhausted ({used} of {budget} used)")]
    BudgetExhausted { used: usize, budget: usize },

    #[error("trial {trial} for method {method} failed: {source}")]
    Trial {
        trial: usize,
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Diverged { .. } => "diverged-rollout",
            Error::IllConditioned { .. } => "ill-conditioned",
            Error::SingularCovariance => "singular-covariance",
            Error::SynthesisFailed(_) => "synthesis-failed",
            Error::HessianFailed { .. } => "hessian-failed",
            Error::DesignFailed(_) => "design-failed",
            Error::MinEigTimeout { .. } => "mineig-timeout",
            Error::BudgetExhausted { .. } => "budget-exhausted",
            Error::Trial { .. } => "trial-failed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
