use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree must be an even integer >= 2, got {0}")]
    InvalidDegree(u32),

    #[error("degree {got} not supported here, need k >= {min}")]
    DegreeTooSmall { got: u32, min: u32 },

    #[error("invalid optimizer parameters: {0}")]
    InvalidParams(String),

    #[error("invalid initialization: {0}")]
    InvalidInitialization(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state cannot be normalized: {0}")]
    NotNormalizable(String),

    #[error("update factor 1 - eta*omega*lambda is exactly zero")]
    DegenerateStep,

    #[error("dynamics produced a non-finite value")]
    Diverged,

    #[error("non-trivial fixed point does not exist for these parameters")]
    NonexistentFixedPoint,

    #[error("not enough usable samples: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
