use thiserror::Error;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Integrity,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right} ({context})")]
    DimensionMismatch {
        left: String,
        right: String,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("Hessian is numerically singular after {retries} damping retries")]
    NumericallySingular { retries: usize },

    #[error("value {value} does not fit in a 16-bit float ({context})")]
    HalfOverflow { value: f64, context: &'static str },

    #[error("tensor names differ: missing {missing:?}, extra {extra:?}")]
    NameMismatch { missing: Vec<String>, extra: Vec<String> },

    #[error("shape mismatch for tensor '{name}': {left} vs {right}")]
    ShapeMismatch { name: String, left: String, right: String },

    #[error("backbone checksum mismatch: delta expects {expected}, backbone has {actual}")]
    ChecksumMismatch { expected: u64, actual: u64 },

    #[error("payload checksum mismatch: header says {expected}, payload hashes to {actual}")]
    PayloadChecksum { expected: u64, actual: u64 },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    BadVersion { expected: u32, found: u32 },

    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("invalid schedule '{spec}': {reason}")]
    InvalidSchedule { spec: String, reason: String },

    #[error("bit budget exhausted: fixed prefix needs {needed} bits, budget is {budget} bits")]
    BudgetExhausted { needed: f64, budget: f64 },

    #[error("schedule needs {ranks} ranks but matrix is {h_out}x{h_in}")]
    RankOverflow { ranks: usize, h_out: usize, h_in: usize },

    #[error("no calibration input for tensor '{0}'")]
    MissingCalibration(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code for this error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::NonFinite(_) => "NON_FINITE",
            Error::SvdNoConvergence { .. } => "SVD_NO_CONVERGENCE",
            Error::NumericallySingular { .. } => "NUMERICALLY_SINGULAR",
            Error::HalfOverflow { .. } => "HALF_OVERFLOW",
            Error::NameMismatch { .. } => "NAME_MISMATCH",
            Error::ShapeMismatch { .. } => "SHAPE_MISMATCH",
            Error::ChecksumMismatch { .. } => "CHECKSUM_MISMATCH",
            Error::PayloadChecksum { .. } => "PAYLOAD_CHECKSUM",
            Error::BadMagic { .. } => "BAD_MAGIC",
            Error::BadVersion { .. } => "BAD_VERSION",
            Error::Truncated { .. } => "TRUNCATED",
            Error::MalformedHeader(_) => "MALFORMED_HEADER",
            Error::Corrupt(_) => "CORRUPT",
            Error::InvalidSchedule { .. } => "INVALID_SCHEDULE",
            Error::BudgetExhausted { .. } => "BUDGET_EXHAUSTED",
            Error::RankOverflow { .. } => "RANK_OVERFLOW",
            Error::MissingCalibration(_) => "MISSING_CALIBRATION",
            Error::Io(_) => "IO",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DimensionMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::NameMismatch { .. }
            | Error::ShapeMismatch { .. }
            | Error::InvalidSchedule { .. }
            | Error::BudgetExhausted { .. }
            | Error::RankOverflow { .. }
            | Error::MissingCalibration(_) => ErrorClass::Usage,
            Error::ChecksumMismatch { .. }
            | Error::PayloadChecksum { .. }
            | Error::BadMagic { .. }
            | Error::BadVersion { .. }
            | Error::Truncated { .. }
            | Error::MalformedHeader(_)
            | Error::Corrupt(_) => ErrorClass::Integrity,
            Error::NonFinite(_)
            | Error::SvdNoConvergence { .. }
            | Error::NumericallySingular { .. }
            | Error::HalfOverflow { .. } => ErrorClass::Numeric,
            Error::Io(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
