use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("graph vertex {0} has zero degree")]
    IsolatedVertex(usize),

    #[error("only {available} eigenvalues exceed the zero tolerance, {requested} requested")]
    InsufficientSpectrum { requested: usize, available: usize },

    #[error("vertex {0} is not part of the tree")]
    VertexNotInTree(usize),

    #[error("edge ({0}, {1}) is not part of the tree")]
    EdgeNotInTree(usize, usize),

    #[error("split rule has an empty knot side")]
    EmptyKnotSide,

    #[error("matrix is not positive definite even after jitter")]
    NotPositiveDefinite,

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("at least {needed} draws required, got {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input or configuration, as opposed to
    /// failures during computation or I/O.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::NotPositiveDefinite | Error::InsufficientSpectrum { .. }
        )
    }
}
