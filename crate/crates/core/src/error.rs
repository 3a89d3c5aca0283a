use thiserror::Error;

/// Errors produced by the geometric and numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dilation parameter must be nonzero (use graded_parts for the limit object)")]
    ZeroDilation,

    #[error(
        "Hörmander condition not reached at depth {max_depth}: rank {rank} < dimension {dim} \
         (either a genuine violation or insufficient depth)"
    )]
    HormanderViolation {
        max_depth: usize,
        rank: usize,
        dim: usize,
    },

    #[error("bracket frame is not adapted to the flag at the base point")]
    FrameNotAdapted,

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("field {index} has no degree -1 part at the base point (not a section of D)")]
    EmptyLowestPart { index: usize },

    #[error("measure density must be positive at the base point, got {value}")]
    NonpositiveDensity { value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {dt:e} violates the stability bound; need dt <= {required:e}")]
    Stability { dt: f64, required: f64 },

    #[error("stencil leaves the grid at node {node}")]
    StencilOverflow { node: usize },

    #[error("ill-conditioned Vandermonde system (condition {condition:e}); {suggestion}")]
    IllConditioned { condition: f64, suggestion: String },

    #[error("point outside the chart trust region: sR pseudo-norm {norm} > {radius}")]
    ChartValidity { norm: f64, radius: f64 },

    #[error("requested degree {requested} exceeds the exact jet degree {available}")]
    TruncationLoss { requested: i64, available: i64 },

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
