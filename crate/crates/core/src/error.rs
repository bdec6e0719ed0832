use std::fmt;

/// A specific invariant that a loaded or constructed value failed.
///
/// `code()` is stable and meant for machine consumption (CLI error lines,
/// FFI error codes); the `Display` form is for humans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ZeroDimension,
    TooManyDays,
    LengthMismatch { expected: usize, actual: usize },
    DaysNotIncreasing,
    DayOutOfRange,
    TemperatureOutOfRange,
    NonFinite,
    BadCellIndex,
    NegativeValue,
    CrossedInterval,
    ShapeMismatch,
    Other(String),
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::ZeroDimension => "zero_dimension",
            Violation::TooManyDays => "too_many_days",
            Violation::LengthMismatch { .. } => "length_mismatch",
            Violation::DaysNotIncreasing => "days_not_increasing",
            Violation::DayOutOfRange => "day_out_of_range",
            Violation::TemperatureOutOfRange => "temperature_out_of_range",
            Violation::NonFinite => "non_finite",
            Violation::BadCellIndex => "bad_cell_index",
            Violation::NegativeValue => "negative_value",
            Violation::CrossedInterval => "crossed_interval",
            Violation::ShapeMismatch => "shape_mismatch",
            Violation::Other(_) => "other",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch { expected, actual } => {
                write!(f, "length mismatch (expected {expected}, got {actual})")
            }
            Violation::Other(msg) => f.write_str(msg),
            other => f.write_str(&other.code().replace('_', " ")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated container: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("invalid {context}: {violation}{}", index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    Invalid {
        context: &'static str,
        violation: Violation,
        index: Option<usize>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("optimizer diverged at epoch {epoch} (pixel {pixel})")]
    Diverged { epoch: usize, pixel: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(context: &'static str, violation: Violation, index: Option<usize>) -> Self {
        Error::Invalid {
            context,
            violation,
            index,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Format(_) => "format",
            Error::Truncated { .. } => "truncated",
            Error::Invalid { .. } => "validation",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Numeric(_) => "numeric",
            Error::Diverged { .. } => "diverged",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
