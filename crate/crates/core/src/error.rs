use alloc::string::String;

/// Errors produced by the guidance engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid depth {0}: depth must be positive and finite")]
    InvalidDepth(f64),
    #[error("point lies at or behind the camera plane")]
    BehindCamera,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("invalid pose: {0}")]
    InvalidPose(&'static str),
    #[error("invalid frustum: {0}")]
    InvalidFrustum(&'static str),
    #[error("object depth is degenerate: no sample survived outlier rejection")]
    DegenerateDepth,
    #[error("invalid detection: {0}")]
    InvalidDetection(&'static str),
    #[error("invalid metric parameter {0:?}")]
    InvalidParameter(String),
    #[error("category {0:?} is not in the prior table")]
    UnknownCategory(String),
    #[error("invalid prior table: {0}")]
    InvalidTable(String),
    #[error("subsurface count must be at least 1")]
    InvalidCount,
    #[error("spheres do not intersect")]
    NotIntersecting,
    #[error("region does not intersect the grid")]
    InvalidRegion,
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("timestamp {t} precedes session clock {clock}")]
    Ordering { t: f64, clock: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("detector failed: {0}")]
    Detector(String),
}
