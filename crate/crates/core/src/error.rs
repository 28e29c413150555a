use std::fmt;

/// Errors raised by the encoder, compiler, engines and estimators.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A signal could not be decoded in the requested window.
    #[error("decoding error: {0}")]
    Decode(String),

    /// Array, vector or layer dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A weight lies outside the admissible range.
    #[error("weight ({row}, {col}) = {value} outside [{min}, {max}]")]
    WeightRange {
        row: usize,
        col: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    /// Slope scaling pushed weights out of range.
    #[error("rescaled weights out of range: {}", format_entries(.entries))]
    Rescale { entries: Vec<RescaleViolation> },

    /// The column never reached the latch threshold inside its window.
    #[error("no threshold crossing before window end (charge {delivered:.6e} C of {required:.6e} C)")]
    NoCrossing { delivered: f64, required: f64 },

    /// The adaptive integrator could not make progress.
    #[error("integration step size underflow at t = {time:.6e} s")]
    StepUnderflow { time: f64 },

    /// A fit or inversion could not produce admissible parameters.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// Failures from individual columns of an array run.
    #[error("{} column(s) failed: {}", .0.len(), format_columns(.0))]
    Columns(Vec<ColumnFailure>),
}

/// A weight that left `[-w_max, w_max]` after slope scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaleViolation {
    /// 0 for the first matrix, 1 for the second.
    pub matrix: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnFailure {
    pub column: usize,
    pub error: Error,
}

impl Error {
    /// True for solver failures (no crossing, integrator breakdown).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NoCrossing { .. } | Error::StepUnderflow { .. } => true,
            Error::Columns(failures) => failures.iter().any(|f| f.error.is_numerical()),
            _ => false,
        }
    }
}

fn format_entries(entries: &[RescaleViolation]) -> String {
    let parts: Vec<String> = entries
        .iter()
        .map(|e| format!("W{}({}, {}) = {}", e.matrix + 1, e.row, e.col, e.value))
        .collect();
    parts.join(", ")
}

fn format_columns(failures: &[ColumnFailure]) -> String {
    let parts: Vec<String> = failures.iter().map(|f| f.to_string()).collect();
    parts.join("; ")
}

impl fmt::Display for ColumnFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column, self.error)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
