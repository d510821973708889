use thiserror::Error;

#[derive(Debug, Error)]
pub enum RemError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("measurement stream contains no samples")]
    EmptyInput,
    #[error("gap of {gap:.1} m at {at:.1} m exceeds the allowed {max_gap:.1} m")]
    GapTooLarge { at: f64, gap: f64, max_gap: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("route distance {distance:.2} m outside covered range [{start:.2}, {end:.2}] for channel {channel}")]
    Coverage {
        channel: u32,
        distance: f64,
        start: f64,
        end: f64,
    },
    #[error("unknown channel {0}")]
    UnknownChannel(u32),
    #[error("unsupported REM schema version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("receiver {0} has no registered power for channel {1}")]
    MissingReceiverPower(u32, u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("background density too high on lane {lane}: {count} vehicles need {needed:.0} m, road is {available:.0} m")]
    DensityTooHigh {
        lane: u8,
        count: usize,
        needed: f64,
        available: f64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum RadioError {
    #[error("invalid ACIR table: {0}")]
    InvalidTable(String),
    #[error("unknown ACIR direction {0:?}")]
    UnknownDirection(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum InterferenceError {
    #[error("airtime {airtime} s must be positive and shorter than the period {period} s")]
    Saturated { airtime: f64, period: f64 },
    #[error(transparent)]
    Rem(#[from] RemError),
}

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("registry protection mode needs DTT receivers in the REM")]
    EmptyRegistry,
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Rem(#[from] RemError),
    #[error(transparent)]
    Interference(#[from] InterferenceError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("startup check failed: {0}")]
    Startup(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rem(#[from] RemError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Interference(#[from] InterferenceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
