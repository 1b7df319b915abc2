use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite sample at byte offset {offset}")]
    NonFinite { offset: u64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("calibration unusable: {0}")]
    CalibrationUnusable(String),
    #[error("empty selection")]
    EmptySelection,
    #[error("need at least 8 tail bins, got {0}")]
    TooFewTailBins(usize),
    #[error("degenerate fit: {0}")]
    FitDegenerate(String),
    #[error("zero energy")]
    ZeroEnergy,
    #[error("selection out of bounds: {0}")]
    OutOfBounds(String),
    #[error("degenerate array: all elements co-located")]
    DegenerateArray,
    #[error("path delay {delay_s} s beyond the delay window")]
    DelayOutOfWindow { delay_s: f64 },
    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),
}

impl Error {
    /// Stable machine-readable code used on the CLI diagnostic stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "E_MISSING_FILE",
            Error::Io { .. } => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::DimensionMismatch(_) => "E_DIMENSION_MISMATCH",
            Error::NonFinite { .. } => "E_NON_FINITE",
            Error::Invalid(_) => "E_INVALID",
            Error::CalibrationUnusable(_) => "E_CALIBRATION_UNUSABLE",
            Error::EmptySelection => "E_EMPTY_SELECTION",
            Error::TooFewTailBins(_) => "E_TAIL_BINS",
            Error::FitDegenerate(_) => "E_FIT_DEGENERATE",
            Error::ZeroEnergy => "E_ZERO_ENERGY",
            Error::OutOfBounds(_) => "E_OUT_OF_BOUNDS",
            Error::DegenerateArray => "E_DEGENERATE_ARRAY",
            Error::DelayOutOfWindow { .. } => "E_DELAY_WINDOW",
            Error::InfeasibleTarget(_) => "E_INFEASIBLE_TARGET",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
