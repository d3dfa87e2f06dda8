use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("objective returned non-finite value {value} (evaluation #{evaluation})")]
    NonFiniteFitness { value: f64, evaluation: usize },

    /// Step size left `[SIGMA_MIN, SIGMA_MAX]` or became non-finite. The state is
    /// left at the clamped value so the run can be reported.
    #[error("step size out of range at iteration {iteration}: sigma = {sigma:e}")]
    StepSize { sigma: f64, iteration: u64 },

    /// A coverage search stopped early; `partial` holds the masters found so
    /// far.
    #[error("coverage search aborted after {} master(s): {source}", partial.master_samples.len())]
    CoverageAborted {
        partial: Box<crate::coverage::CoverageReport>,
        source: Box<Error>,
    },

    /// A run was stopped on request after its state was checkpointed.
    #[error("run interrupted after iteration {iteration}; its checkpoint is at {checkpoint}")]
    Interrupted {
        iteration: usize,
        checkpoint: String,
    },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
