use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("interval {interval} exceeds the depth cap {cap}")]
    DepthCap { interval: String, cap: u32 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dim { expected: usize, found: usize },
    #[error("nonpositive weight value {0}")]
    NonPositive(f64),
    #[error("invalid rearrangement plan: {0}")]
    Plan(String),
    #[error("hyperbola solver: {0}")]
    Hyperbola(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("no frequency assigned to starting interval {0}")]
    Frequency(String),
    #[error("input shape: {0}")]
    Shape(String),
    #[error("tree too large for explicit enumeration ({0} cells)")]
    TooLarge(f64),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
