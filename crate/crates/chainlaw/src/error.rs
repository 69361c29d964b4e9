use std::fmt;

use crate::model::TimeIndex;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by chain construction and analysis operations.
///
/// Validation of a whole model is report-based (see
/// [`crate::model::Violation`]); this type covers hard failures of
/// individual operations, such as dimension mismatches or out-of-window
/// time indices.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Two objects that must share a dimension do not.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Two objects that must share a time index do not.
    TimeMismatch { expected: TimeIndex, got: TimeIndex },
    /// A requested time index lies outside the model window.
    OutOfWindow {
        time: TimeIndex,
        start: TimeIndex,
        end: TimeIndex,
    },
    /// No transition matrix is stored for the requested step.
    MissingMatrix { time: TimeIndex },
    /// A product was requested over an empty or reversed range.
    EmptyRange { s: TimeIndex, t: TimeIndex },
    /// A 1-based state index is outside `1..=len`.
    IndexOutOfRange { index: usize, len: usize },
    /// The model window is too shallow for the requested analysis depth.
    InsufficientWindow { needed: i64, available: i64 },
    /// A probe schedule is empty or not strictly decreasing.
    InvalidSchedule { reason: &'static str },
    /// Band thresholds must satisfy `0 < p < q < 1`.
    InvalidBands { p: f64, q: f64 },
    /// A tail-event specification is unusable for the requested operation.
    InvalidEvent { reason: String },
    /// Marginals passed to a reversal operation are not consistent with the
    /// forward kernels.
    InconsistentMarginals { time: TimeIndex, residual: f64 },
    /// A numeric parameter is outside its valid range.
    InvalidParameter { what: &'static str, value: f64 },
    /// A truncated row carries no mass inside the kept states, so it cannot
    /// be renormalized.
    EmptyTruncatedRow { time: TimeIndex, state: usize },
    /// The support of a walk exceeds the requested truncation size.
    SupportExceedsTruncation { needed: usize, truncation: usize },
    /// A demonstration law leaves the truncated state space inside the window.
    LeavesTruncation {
        time: TimeIndex,
        state: i64,
        truncation: usize,
    },
    /// The Monte Carlo configuration is unusable.
    InvalidSimConfig { reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(
                f,
                "dimension mismatch for {what}: expected {expected}, got {got}"
            ),
            Self::TimeMismatch { expected, got } => {
                write!(f, "time mismatch: expected {expected}, got {got}")
            }
            Self::OutOfWindow { time, start, end } => {
                write!(f, "time {time} outside window [{start}, {end}]")
            }
            Self::MissingMatrix { time } => {
                write!(f, "no transition matrix stored at time {time}")
            }
            Self::EmptyRange { s, t } => {
                write!(f, "product range requires s < t, got s={s}, t={t}")
            }
            Self::IndexOutOfRange { index, len } => {
                write!(f, "state index {index} outside 1..={len}")
            }
            Self::InsufficientWindow { needed, available } => {
                write!(f, "window depth {available} is less than required {needed}")
            }
            Self::InvalidSchedule { reason } => write!(f, "invalid schedule: {reason}"),
            Self::InvalidBands { p, q } => {
                write!(
                    f,
                    "band thresholds must satisfy 0 < p < q < 1, got p={p}, q={q}"
                )
            }
            Self::InvalidEvent { reason } => write!(f, "invalid tail event: {reason}"),
            Self::InconsistentMarginals { time, residual } => write!(
                f,
                "marginals inconsistent with kernels at time {time} (residual {residual:.3e})"
            ),
            Self::InvalidParameter { what, value } => {
                write!(f, "parameter {what} out of range: {value}")
            }
            Self::EmptyTruncatedRow { time, state } => write!(
                f,
                "row {state} at time {time} has no mass inside the truncation"
            ),
            Self::SupportExceedsTruncation { needed, truncation } => write!(
                f,
                "walk support needs {needed} states, truncation keeps only {truncation}"
            ),
            Self::LeavesTruncation {
                time,
                state,
                truncation,
            } => write!(
                f,
                "law at time {time} sits at state {state}, outside truncation 1..={truncation}"
            ),
            Self::InvalidSimConfig { reason } => {
                write!(f, "invalid simulation config: {reason}")
            }
        }
    }
}

impl std::error::Error for Error {}
