use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report. Variant names double as the
/// stable error names printed by the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported QPIF version {0}")]
    Version(u16),
    #[error("cannot crop {width}x{height} field to {size}x{size}")]
    Crop { width: usize, height: usize, size: usize },
    #[error("pair mismatch: {0}")]
    Pair(String),
    #[error("filter radius {radius} overlaps the DC term (carrier magnitude {carrier})")]
    SidebandOverlap { radius: f64, carrier: f64 },
    #[error("carrier ({fx}, {fy}) is outside (0, 0.5) cycles/pixel")]
    InvalidCarrier { fx: f64, fy: f64 },
    #[error("zernike domain error: {0}")]
    Domain(String),
    #[error("background amplitude below floor at pixel (row {row}, col {col})")]
    BadBackground { row: usize, col: usize },
    #[error("fit needs at least {modes} pixels but the mask selects {pixels}")]
    UnderdeterminedFit { modes: usize, pixels: usize },
    #[error("relative index contrast {contrast:.4} exceeds the weak-scattering bound {bound}")]
    ScatteringBound { contrast: f64, bound: f64 },
    #[error("illumination ({kx}, {ky}) is evanescent in the medium (k_m = {k_medium})")]
    InvalidAngle { kx: f64, ky: f64, k_medium: f64 },
    #[error("expected {expected} fields, got {actual}")]
    AngleCountMismatch { expected: usize, actual: usize },
    #[error("field {index} carries wrapped phase ({jumps} jumps exceed pi); unwrap first")]
    NeedsUnwrap { index: usize, jumps: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("both fields are identically zero")]
    DegenerateField,
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("empty input")]
    EmptyInput,
    #[error("scene {scene} rejected: {reason}")]
    SceneRejected { scene: u64, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown strategy {name:?}; registered: {known}")]
    UnknownStrategy { name: String, known: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::InvalidField(_) => "InvalidField",
            Error::Format(_) => "FormatError",
            Error::Version(_) => "VersionError",
            Error::Crop { .. } => "CropError",
            Error::Pair(_) => "PairError",
            Error::SidebandOverlap { .. } => "SidebandOverlap",
            Error::InvalidCarrier { .. } => "InvalidCarrier",
            Error::Domain(_) => "DomainError",
            Error::BadBackground { .. } => "BadBackground",
            Error::UnderdeterminedFit { .. } => "UnderdeterminedFit",
            Error::ScatteringBound { .. } => "ScatteringBound",
            Error::InvalidAngle { .. } => "InvalidAngle",
            Error::AngleCountMismatch { .. } => "AngleCountMismatch",
            Error::NeedsUnwrap { .. } => "NeedsUnwrap",
            Error::Shape(_) => "ShapeError",
            Error::DegenerateField => "DegenerateField",
            Error::EmptyMask => "EmptyMask",
            Error::EmptyInput => "EmptyInput",
            Error::SceneRejected { .. } => "SceneRejected",
            Error::Config(_) => "ConfigError",
            Error::UnknownStrategy { .. } => "UnknownStrategy",
        }
    }
}
