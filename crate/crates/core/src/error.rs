use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: row has {found} columns, expected {expected}", path.display())]
    RaggedMatrix {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{}:{line}:{column}: non-numeric cell {cell:?}", path.display())]
    NonNumeric {
        path: PathBuf,
        line: usize,
        column: usize,
        cell: String,
    },

    #[error("{}: matrix has no rows", path.display())]
    EmptyMatrix { path: PathBuf },

    #[error("{}: {found} samples, expected {expected}", path.display())]
    SampleCountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("manifold coefficient denominator is zero for (i={i}, j={j}); samples coincide")]
    ZeroManifoldDenominator { i: usize, j: usize },

    #[error("node {requester} cannot access the view held by node {owner}")]
    AccessDenied { requester: usize, owner: usize },

    #[error("neighborhood size k={k} out of range for n={n} (need 1 <= k <= n-1)")]
    NeighborhoodOutOfRange { k: usize, n: usize },

    #[error("vertex {0} has zero degree")]
    IsolatedVertex(usize),

    #[error("linear system of size {0} is not positive definite")]
    Factorization(usize),

    #[error("eigendecomposition produced non-finite values")]
    Eigen,

    #[error("node {node} failed: {source}")]
    NodeFailure {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
