use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RdpgError>;

#[derive(Debug, Error)]
pub enum RdpgError {
    #[error("invalid latent positions: {0}")]
    InvalidLatentPositions(String),

    #[error("block probability matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("invalid block model: {0}")]
    InvalidBlockModel(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("vertex {vertex} out of range for graph on {n} vertices (line {line})")]
    VertexOutOfRange { vertex: usize, n: usize, line: usize },

    #[error("embedding dimension {d} exceeds vertex count {n}")]
    DimensionTooLarge { d: usize, n: usize },

    #[error("embedding dimension must be at least 1")]
    ZeroDimension,

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("eigensolver failed to converge: {0}")]
    EigSolverFailure(String),

    #[error("matrix is identically zero")]
    ZeroMatrix,

    #[error("rank deficient: d-th eigenvalue {value:.3e} is not above {threshold:.1e}")]
    RankDeficient { value: f64, threshold: f64 },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },

    #[error("vertex {0} has a (near) zero embedding row and cannot be projected onto the unit sphere")]
    ZeroRow(usize),

    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("graphs have different vertex counts: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("vertex sets differ: {0}")]
    VertexSetMismatch(String),

    #[error("degenerate eigengap: gamma2 = {0:.3e}")]
    DegenerateGamma(f64),

    #[error("rejection threshold must exceed 1, got {0}")]
    InvalidThreshold(f64),

    #[error("block of {size} vertices is too small for dimension {d} (need at least d + 2)")]
    BlockTooSmall { size: usize, d: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<RdpgError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RdpgError {
    pub fn context(self, context: impl Into<String>) -> Self {
        RdpgError::Context { context: context.into(), source: Box::new(self) }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &RdpgError {
        match self {
            RdpgError::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
