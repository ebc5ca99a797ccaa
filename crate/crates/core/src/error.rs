use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: vertex index {index} out of range for {count} vertices")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        count: usize,
    },

    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),

    #[error("tetrahedron {0} has non-positive rest volume")]
    InvertedTetrahedron(usize),

    #[error("surface graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("surface vertex {vertex} lies outside every tetrahedron (violation {violation:e})")]
    OutsideLattice { vertex: usize, violation: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid binary format: {0}")]
    Format(String),

    #[error("assignment needs rows <= columns, got {rows} x {cols}")]
    TooManyRows { rows: usize, cols: usize },

    #[error("cost ({row}, {col}) is not a finite non-negative number")]
    InvalidCost { row: usize, col: usize },

    #[error("requested {k} neighbors but only {available} are available")]
    TooManyNeighbors { k: usize, available: usize },

    #[error("backward already ran on this graph")]
    GraphConsumed,

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("reduction over an empty axis")]
    EmptyAxis,

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("vertex {vertex} has {available} neighbors, needs at least {required}")]
    TooFewNeighbors {
        vertex: usize,
        available: usize,
        required: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing {0}")]
    Missing(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("point {0:?} is outside the lattice bounds")]
    OutOfBounds([f64; 3]),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
