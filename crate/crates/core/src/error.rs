use thiserror::Error;

/// Errors raised by the pipeline.
///
/// Variants are grouped so that a front end can map them onto a small set of
/// exit codes: validation problems, numeric failures and I/O or format problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("memory budget exceeded: need {needed_bits} bits, cap is {cap_bits} bits")]
    BudgetExceeded { needed_bits: u64, cap_bits: u64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error class used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numeric,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::BudgetExceeded { .. } => {
                ErrorClass::Validation
            }
            Error::NonFinite(_) | Error::Overflow(_) => ErrorClass::Numeric,
            Error::Format(_) | Error::Io(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => { $crate::error::Error::InvalidArgument(format!($($arg)*)) };
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::ShapeMismatch(format!($($arg)*)) };
}

macro_rules! format_err {
    ($($arg:tt)*) => { $crate::error::Error::Format(format!($($arg)*)) };
}

pub(crate) use {format_err, invalid, shape_err};
