use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("point cloud needs at least 4 points, got {0}")]
    TooFewPoints(usize),

    #[error("points {first} and {second} coincide")]
    DuplicatePoint { first: usize, second: usize },

    #[error("normal has norm {norm}, expected unit length")]
    NonUnitNormal { norm: f64 },

    #[error("point cloud has no normals")]
    MissingNormals,

    #[error("invalid neighbor count k={k} for {n} points: {reason}")]
    InvalidNeighborCount {
        k: usize,
        n: usize,
        reason: &'static str,
    },

    #[error("normal direction is ill-defined at point {index} (degenerate neighborhood)")]
    DegenerateNormal { index: usize },

    #[error("invalid kernel configuration: {0}")]
    InvalidKernel(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("incompatible matrices: {0}")]
    IncompatibleMatrices(String),

    #[error("collocation matrix is numerically singular (condition estimate {condition:e})")]
    SingularCollocation { condition: f64 },

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("non-finite values at step {step}: time stepping is unstable")]
    BlowUp { step: usize },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, looking through `StepFailed` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::StepFailed { source, .. } => source.root(),
            other => other,
        }
    }
}
