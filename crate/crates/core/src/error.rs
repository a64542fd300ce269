use std::path::PathBuf;

use thiserror::Error;

use crate::trainer::DiagnosticsTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("row {row} has norm {norm:e}, too small to normalize")]
    NumericalUnderflow { row: usize, norm: f64 },

    #[error("bad magic number in {path}: expected {expected}, found {found}")]
    BadMagic {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path} is truncated: {detail}")]
    TruncatedFile { path: PathBuf, detail: String },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("shape header mismatch: {0}")]
    ShapeHeaderMismatch(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("index {index} out of range for {len} embeddings")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("infeasible batch: {0}")]
    InfeasibleBatch(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        /// Records of every epoch completed before the failure.
        trace: Box<DiagnosticsTrace>,
    },

    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),

    #[error("class {class} has {count} samples, need at least 2")]
    TooFewSamples { class: i32, count: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("eigen-decomposition did not converge for component {component} after {iterations} iterations")]
    ConvergenceFailure { component: usize, iterations: usize },

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("k = {k} exceeds the usable gallery size {gallery}")]
    KTooLarge { k: usize, gallery: usize },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{stage} stage failed: {source}")]
    Stage { stage: String, source: Box<Error> },
}
