use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {0} is not in the required region: {1}")]
    WrongRegion(crate::model::LatticePoint, &'static str),

    #[error("linear solve residual {residual:e} exceeds {limit:e}")]
    IllConditioned { residual: f64, limit: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("kernel loses {lost:e} of its mass, above the allowed {limit:e}")]
    KernelTooLossy { lost: f64, limit: f64 },

    #[error("unknown threshold {0}")]
    UnknownThreshold(f64),

    #[error("lambda {0} is not on the accumulator grid")]
    UnknownLambda(f64),

    #[error("empty accumulator: {0}")]
    Empty(&'static str),

    #[error("incompatible accumulators: {0}")]
    Incompatible(String),

    #[error("no overlapping support between empirical and exact laws")]
    NoOverlap,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("scenario `{scenario}` requires alpha > 3, got {alpha}")]
    TheoremRegime { scenario: String, alpha: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("run interrupted after {blocks} blocks; state saved to {path}")]
    Interrupted { blocks: u64, path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
