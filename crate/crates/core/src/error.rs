//! Error types shared across the library.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("mesh has no usable faces")]
    EmptyMesh,

    #[error("face {face} has {arity} vertices; only triangles are supported")]
    NonTriangleFace { face: usize, arity: usize },

    #[error("all faces are degenerate after filtering")]
    DegenerateGeometry,

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("requested {requested} eigenpairs; at most {max} available")]
    KTooLarge { requested: usize, max: usize },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFiniteValue(String),

    #[error("template vertex counts differ: {left} vs {right}")]
    TemplateMismatch { left: usize, right: usize },

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("all surrogate runs failed")]
    AllSurrogatesFailed,

    #[error("non-finite energy at level K={level}")]
    NonFiniteEnergy { level: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
