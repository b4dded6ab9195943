use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dense representation needs {required} entries, above the cap of {cap}")]
    CapacityExceeded { required: u128, cap: u128 },

    #[error("degenerate marginal: probability {value} at spin index {index} is outside (0, 1)")]
    DegenerateMarginal { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid spin space: {0}")]
    InvalidSpinSpace(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical breakdown in Gram-Schmidt at degree {degree}: residual norm {norm:e}")]
    NumericalBreakdown { degree: usize, norm: f64 },

    #[error("log domain violated: 1 + q.f(s_{level}) = {value} is not positive")]
    DomainError { level: usize, value: f64 },

    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid config: {message}")]
    Validation { message: String, capacity_only: bool },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
