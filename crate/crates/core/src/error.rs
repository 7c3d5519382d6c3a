use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("non-finite entry in {field} at (row {row}, col {col})")]
    NonFinite {
        field: &'static str,
        row: usize,
        col: usize,
    },
    #[error("rank-deficient matrix: row {row} is numerically dependent on the previous rows (|r| = {pivot:e}){hint}")]
    RankDeficient {
        row: usize,
        pivot: f64,
        hint: &'static str,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("no nondegenerate triangle can be formed from the database samples")]
    NoTriangle,
    #[error("degenerate triangle: parameter vertices are collinear")]
    DegenerateTriangle,
    #[error("incompatible samples: {0}")]
    Incompatible(String),
    #[error("time step {dt} exceeds the stability cap {cap:.6}; use dt <= {suggested:.6}")]
    StepTooLarge { dt: f64, cap: f64, suggested: f64 },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::RankDeficient { .. } | Error::Singular(_) | Error::Numeric(_) => {
                ErrorKind::Numeric
            }
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(
        context: &'static str,
        expected: impl core::fmt::Display,
        found: impl core::fmt::Display,
    ) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
