use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid {ny}x{nx} is smaller than the minimum {min}x{min}")]
    GridTooSmall { ny: usize, nx: usize, min: usize },

    #[error("calibration region only {coverage:.1}% covered (central {width} lines, need 90%)")]
    InsufficientCalibration { coverage: f64, width: usize },

    #[error("no principal component has 40% of its energy in the respiratory band (best {best:.2})")]
    NoRespiratorySignal { best: f64 },

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("mismatched keys: {0}")]
    KeyMismatch(String),

    #[error("container format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
