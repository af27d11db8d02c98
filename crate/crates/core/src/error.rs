use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // ingestion and frame construction
    #[error("missing channel `{0}`")]
    MissingChannel(String),
    #[error("non-uniform sampling: gap of {gap} s where {expected} s was expected (row {row})")]
    NonUniformSampling { row: usize, gap: i64, expected: i64 },
    #[error("non-finite value at row {row}, channel `{channel}`")]
    NonFiniteValue { row: usize, channel: String },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("bad timestamp `{0}`")]
    BadTimestamp(String),
    #[error("frame is empty or too short for the requested statistic")]
    EmptyFrame,
    #[error("frame of length {len} is shorter than window of {window_len}")]
    FrameTooShort { len: usize, window_len: usize },

    // feeder
    #[error("total grid peak load must be positive")]
    ZeroPeakLoad,
    #[error("power flow did not converge after {iterations} iterations")]
    PowerFlowDivergence { iterations: usize },
    #[error("invalid power factor {0}")]
    InvalidPowerFactor(f64),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    // attacks
    #[error("attack interval [{start}, {end}) outside frame of length {len}")]
    IntervalOutOfRange { start: usize, end: usize, len: usize },
    #[error("invalid attack factor {0}")]
    InvalidFactor(f64),
    #[error("invalid attack schedule: {0}")]
    InvalidSchedule(String),

    // detectors
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("solver did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("isolation subsample contains identical points only")]
    DegenerateSubsample,
    #[error("corrupted data is identical to normal data")]
    DegenerateLabels,
    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("training loss became non-finite after {restarts} restarts")]
    NonFiniteLoss { restarts: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // fusion
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("fusion inputs have mixed orientation")]
    MixedOrientation,

    // evaluation
    #[error("labels contain a single class: no {0} samples")]
    SingleClassLabels(&'static str),
    #[error("confusion counts are all zero")]
    AllZeroCounts,

    // run directories
    #[error("model schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
