use std::io;

use thiserror::Error;

/// Errors produced by the geometry and reconstruction routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing key: {0}")]
    MissingKey(String),

    #[error("non-numeric value for {key}: {value:?}")]
    NonNumeric { key: String, value: String },

    #[error("coefficient count for {block} is {count}, expected 20")]
    CoefficientCount { block: String, count: usize },

    #[error("invalid RPC model: {0}")]
    InvalidModel(String),

    #[error("degenerate projection: denominator {0:e} below threshold")]
    DegenerateProjection(f64),

    #[error("localization failed: {0}")]
    LocalizationFailure(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("inverse RPC coefficients are not available")]
    MissingInverse,

    #[error("height {height} m outside model range [{min}, {max}]")]
    HeightOutOfRange { height: f64, min: f64, max: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("empty cost volume: no valid source view at any plane")]
    EmptyVolume,

    #[error("latitude {0} outside UTM domain")]
    PolarLatitude(f64),

    #[error("generation failed: {0}")]
    GenerationFailure(String),

    #[error("no overlapping valid cells between estimate and ground truth")]
    NoOverlap,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
