use thiserror::Error;

/// Crate-wide error type.
///
/// `exit_code` groups variants the way the CLI reports them: 1 for usage
/// errors, 2 for data/format errors, 3 for numerical failures.
#[derive(Debug, Error)]
pub enum LnoError {
    #[error("shape mismatch on axis {axis}: {detail}")]
    ShapeMismatch { axis: usize, detail: String },

    #[error("axis {axis}: (input {input} - kernel {kernel}) is not divisible by stride {stride}")]
    StrideMismatch {
        axis: usize,
        input: usize,
        kernel: usize,
        stride: usize,
    },

    #[error("kernel extent {extent} does not equal stride {stride} x overlap {overlap}")]
    InvalidOverlap {
        extent: usize,
        stride: usize,
        overlap: usize,
    },

    #[error("invalid configuration: {field}: {detail}")]
    InvalidConfig { field: &'static str, detail: String },

    #[error("grid axis {axis} has {size} points; nearest valid size is {suggested}")]
    GridTooSmall {
        axis: usize,
        size: usize,
        suggested: usize,
    },

    #[error("backward called on an empty or already-consumed tape")]
    TapeConsumed,

    #[error("{what} did not converge within {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite values detected in {context} at step {step} (max |u| before failure: {max_abs:.3e})")]
    NonFinite {
        context: String,
        step: usize,
        max_abs: f64,
    },

    #[error("training diverged at iteration {iteration}: loss {loss:.3e} exceeds 1000x initial {initial:.3e}")]
    Diverged {
        iteration: usize,
        loss: f64,
        initial: f64,
    },

    #[error("constant boundary rule on axis {axis} needs {expected} per-channel values, got {got}")]
    ConstantArity {
        axis: usize,
        expected: usize,
        got: usize,
    },

    #[error("Lagrange point {index} at ({x:.4}, {y:.4}) has delta support outside the grid")]
    LagrangeOutOfGrid { index: usize, x: f64, y: f64 },

    #[error("file format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint declares {declared} weights but config requires {required}")]
    WeightCountMismatch { declared: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LnoError {
    /// CLI exit code for this error: 1 usage, 2 data/format, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            LnoError::InvalidConfig { .. } | LnoError::ConstantArity { .. } => 1,
            LnoError::Format(_)
            | LnoError::VersionMismatch { .. }
            | LnoError::WeightCountMismatch { .. }
            | LnoError::Io(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, LnoError>;
