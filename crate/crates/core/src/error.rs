use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no unique stationary law: {0}")]
    NoUniqueStationaryLaw(String),

    #[error("budget exceeded: {what} needs {needed}, limit is {limit}")]
    Budget {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("conditioning on a probability-zero event ({0})")]
    ZeroProbability(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("index {index} lies below the ray start {ray_start}")]
    BelowRay { index: u64, ray_start: u64 },

    #[error("map q_{component} is not strictly increasing at n = {at}")]
    NonMonotone { component: usize, at: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("missing constant `{0}`")]
    MissingConstant(&'static str),

    #[error("truncation target {target:e} unreachable within horizon {horizon}")]
    Truncation { target: f64, horizon: usize },

    #[error("seed mismatch: {0}")]
    SeedMismatch(String),

    #[error("no feasible constant for `{0}`")]
    Calibration(String),

    #[error("line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn budget(what: &'static str, needed: u128, limit: u128) -> Result<()> {
    if needed > limit {
        Err(Error::Budget { what, needed, limit })
    } else {
        Ok(())
    }
}
