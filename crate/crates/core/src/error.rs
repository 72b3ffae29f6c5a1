use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("invalid grading parameter at corner {corner} ({x}, {y}): mu = {mu}, admissible {admissible}")]
    InvalidGrading {
        corner: usize,
        x: f64,
        y: f64,
        mu: f64,
        admissible: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle {element} (area {area:e})")]
    DegenerateElement { element: usize, area: f64 },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coefficient assumption violated: {0}")]
    Coefficients(String),

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("point ({0}, {1}) lies outside the reference mesh")]
    PointOutsideDomain(f64, f64),

    #[error("missing singular reference field: {0}")]
    MissingReference(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
