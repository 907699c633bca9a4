//! Error type shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least {min}, got {got}")]
    InvalidDimension { got: usize, min: usize },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("bubble range {lo}..={hi} outside valid index range 1..={d}")]
    BubbleRange { lo: usize, hi: usize, d: usize },

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty dataset ({rows}x{cols})")]
    EmptyDataset { rows: usize, cols: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A parent vector lies (numerically) in the null space of the data
    /// operator, so its penalty denominator cannot be trusted.
    #[error("parent {index} degenerate: quadratic form {value:.3e} below guard {guard:.3e}")]
    DegenerateParent { index: usize, value: f64, guard: f64 },

    #[error("retraction step collapsed to the origin")]
    DegenerateStep,

    #[error("rank deficient matrix: {0}")]
    RankDeficient(String),

    #[error("orthonormalization failed: {0}")]
    Orthonormalization(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("direction not tangent to its anchor (inner product {dot:.3e})")]
    InvalidTangent { dot: f64 },

    #[error("degenerate landscape: A = B = 0 has no unique maximizer")]
    DegenerateLandscape,

    #[error("boundary value: {0}")]
    Boundary(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("worker for player {player} failed: {msg}")]
    Worker { player: usize, msg: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("config error: {0}")]
    Config(String),
}
