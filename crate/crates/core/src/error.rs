use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("cell index ({i}, {j}) out of range for {nx}x{ny} grid")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        nx: usize,
        ny: usize,
    },

    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("fields are defined on different grids")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular interpolation system: {0}")]
    SingularSystem(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("time step {dt:.3e} s violates stability limit {limit:.3e} s")]
    CflViolation { dt: f64, limit: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
