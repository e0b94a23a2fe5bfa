use thiserror::Error;

/// Errors raised by the simulation and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("dimension mismatch: grid declares {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("degenerate volume")]
    DegenerateVolume,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("pattern frequency beyond cutoff")]
    PatternBeyondCutoff,
    #[error("singular separation matrix")]
    SingularMatrix,
    #[error("GWF requires 15 images")]
    GwfRequiresFull,
    #[error("unknown scheme: {0}")]
    UnknownScheme(String),
    #[error("missing images: {0}")]
    MissingImages(String),
    #[error("signal is identically zero")]
    ZeroSignal,
    #[error("target SNR unreachable: {0}")]
    SnrUnreachable(String),
    #[error("initial guess orthogonal to data")]
    InitialGuessOrthogonal,
    #[error("invalid phantom geometry: {0}")]
    InvalidGeometry(String),
    #[error("anchor out of range: {0}")]
    AnchorOutOfRange(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) | Error::GridTooSmall(_) => "grid",
            Error::GridMismatch(_) | Error::DimensionMismatch { .. } => "mismatch",
            Error::NonFinite(_) | Error::DegenerateVolume | Error::ZeroSignal => "degenerate",
            Error::InvalidParameter(_)
            | Error::PatternBeyondCutoff
            | Error::UnknownScheme(_)
            | Error::InvalidGeometry(_)
            | Error::AnchorOutOfRange(_) => "parameter",
            Error::SingularMatrix | Error::SnrUnreachable(_) | Error::InitialGuessOrthogonal => {
                "numerical"
            }
            Error::GwfRequiresFull | Error::MissingImages(_) => "scheme",
            Error::Format(_) | Error::Json(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
