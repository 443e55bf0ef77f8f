use thiserror::Error;

/// Errors surfaced by model validation, simulation and the verification
/// drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("time {time} is not aligned to the grid with step {step}")]
    NotGridAligned { time: f64, step: f64 },

    #[error("time {time} is beyond the path horizon {horizon}")]
    BeyondHorizon { time: f64, horizon: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid stopping rule: {0}")]
    InvalidRule(String),

    #[error("rule window {window} exceeds the path horizon {horizon}")]
    WindowExceedsHorizon { window: f64, horizon: f64 },

    #[error("paths live on different grids")]
    GridMismatch,

    #[error(
        "pilot check failed: only {positive_fraction:.4} of pilot segments had T > 0 \
         (need at least {required:.4})"
    )]
    PilotFailed {
        positive_fraction: f64,
        required: f64,
    },

    #[error("too few surviving samples for the diagnostic: {survivors} < {required}")]
    InsufficientSurvivors { survivors: usize, required: usize },

    #[error("sample too small: {len} < {required}")]
    UndersizedSample { len: usize, required: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid statistic input: {0}")]
    InvalidStatInput(String),

    #[error("killed input where an unkilled Lévy law is required (kill rate {0})")]
    KilledInput(f64),

    #[error("invalid rate matrix: {0}")]
    InvalidRateMatrix(String),

    #[error("invalid scenario config: {0}")]
    InvalidScenario(String),

    #[error("unknown scenario: {0}")]
    UnknownScenario(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
