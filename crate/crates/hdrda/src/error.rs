use thiserror::Error;

/// Errors produced by the estimator, reduction, model-selection, simulation
/// and IO layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected p={expected}, got p={found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "degenerate shrinkage: the diagonal factor is identically zero at (lambda, gamma) = (0, 0)"
    )]
    Degenerate,

    #[error("matrix is not positive definite ({0})")]
    NotPd(&'static str),

    #[error("all eigenvalues are at or below the rank tolerance {tolerance}; the data carry no variance")]
    RankZero { tolerance: f64 },

    #[error("tuning grid is empty")]
    EmptyGrid,

    #[error("class {class} has only {count} observation(s); at least {required} are required")]
    TooFewPerClass {
        class: String,
        count: usize,
        required: usize,
    },

    #[error("class {class} is absent from the training folds while held out in fold {fold}")]
    ClassAbsentFromTraining { class: String, fold: usize },

    #[error("bad dimension: {0}")]
    BadDimension(String),

    #[error("bad feature count {requested}: must be between 1 and {available}")]
    BadCount { requested: usize, available: usize },

    #[error("parameter out of range: {0}")]
    BadParameter(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("label column {0:?} not found in header")]
    MissingLabel(String),

    #[error("non-numeric feature value {value:?} at row {row}, column {column}")]
    NonNumericFeature {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("unsupported model file version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attaches the offending path to an IO error.
    pub fn file(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::File {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
