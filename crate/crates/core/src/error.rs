//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers that map errors to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data.
    Validation,
    /// A numeric backend could not complete (singularity, separation, optimizer failure).
    Backend,
    /// Too many replications failed inside a simulation study.
    Simulation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-binary treatment: row {row} has value {value}")]
    NonBinaryTreatment { row: usize, value: f64 },

    #[error("missing value in column '{column}' at row {row}")]
    MissingValue { column: String, row: usize },

    #[error(
        "column '{column}' declared with {categories} categories but row {row} holds {value}; \
         discrete values must be integers in 0..{categories}"
    )]
    CategoryOutOfRange {
        column: String,
        row: usize,
        value: f64,
        categories: u32,
    },

    #[error("treatment arm T={arm} is empty")]
    EmptyArm { arm: u8 },

    #[error("input table is not rectangular: row {row} has {got} fields, expected {expected}")]
    NotRectangular { row: usize, got: usize, expected: usize },

    #[error("observed outcome at row {row} does not equal the potential outcome under its arm")]
    InconsistentPotential { row: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown covariate name '{0}'")]
    UnknownCovariate(String),

    #[error("covariate index {index} out of range for {p} columns")]
    IndexOutOfRange { index: usize, p: usize },

    #[error(
        "selection bundle is missing {missing}; run algorithm {algorithm} before taking this union"
    )]
    MissingBundleSet { missing: String, algorithm: char },

    #[error(
        "sample covariance is singular or near-singular (condition number {condition:.3e}); \
         near-collinear columns: {columns:?}"
    )]
    SingularCovariance { condition: f64, columns: Vec<usize> },

    #[error("continuous-only backend cannot handle column {column} of kind {kind}; use the kernel backend")]
    NeedsContinuous { column: usize, kind: String },

    #[error("slice {slice} holds {got} observations; every slice needs at least 2")]
    SliceTooSmall { slice: usize, got: usize },

    #[error("slice count {h} exceeds n/2 = {max} for n = {n}")]
    TooManySlices { h: usize, n: usize, max: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("empty effective neighborhood at query row {row}: all kernel weights vanished")]
    EmptyNeighborhood { row: usize },

    #[error("bandwidth search produced no admissible point: {0}")]
    OptimizerFailure(String),

    #[error("logistic fit did not identify finite coefficients (likely perfect separation); \
             consider vector-norm matching instead")]
    Separation,

    #[error("weighted design matrix is singular in the logistic fit")]
    SingularDesign,

    #[error("no matching variables: the covariate set is empty")]
    EmptyMatchSet,

    #[error("{failed} of {total} replications failed (cap is 5%); first failure: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {message}")]
    Csv { path: String, message: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            NonBinaryTreatment { .. }
            | MissingValue { .. }
            | CategoryOutOfRange { .. }
            | EmptyArm { .. }
            | NotRectangular { .. }
            | InconsistentPotential { .. }
            | Schema(..)
            | UnknownCovariate(..)
            | IndexOutOfRange { .. }
            | MissingBundleSet { .. }
            | InvalidArgument(..)
            | EmptyMatchSet
            | Io { .. }
            | Csv { .. } => ErrorClass::Validation,
            SingularCovariance { .. }
            | NeedsContinuous { .. }
            | SliceTooSmall { .. }
            | TooManySlices { .. }
            | EmptyNeighborhood { .. }
            | OptimizerFailure(..)
            | Separation
            | SingularDesign => ErrorClass::Backend,
            TooManyFailures { .. } => ErrorClass::Simulation,
        }
    }
}
