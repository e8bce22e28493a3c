use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("system unstable (spectral radius {0}) - method assumptions violated")]
    Unstable(f64),

    #[error("spectral radius zero, decay rate undefined for a nonzero nilpotent A")]
    Nilpotent,

    #[error("degenerate system draw: spectral radius zero after {0} redraws")]
    DegenerateDraw(usize),

    #[error("horizon {horizon} exceeds trajectory length {length}")]
    HorizonTooLong { horizon: usize, length: usize },

    #[error("row {row}: max_iters exceeded without KKT satisfaction (residual {residual:e})")]
    NotConverged { row: usize, residual: f64 },

    #[error("insufficient Markov blocks: need {needed}, have {available}")]
    InsufficientBlocks { needed: usize, available: usize },

    #[error("rank collapse: no singular value above threshold")]
    RankCollapse,

    #[error("ill-conditioned pseudo-inverse: sigma_r / sigma_1 = {0:e}")]
    IllConditioned(f64),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("config: {0}")]
    Config(String),

    #[error("schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
