//! Crate-wide error type.

/// Everything that can go wrong across the toolkit, from linear algebra up
/// to file I/O. One flat enum keeps `Result` signatures uniform and lets the
/// CLI map variants onto its exit-code contract.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite (jitter ladder exhausted)")]
    NotPositiveDefinite,

    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("kernel syntax error at byte {pos}: expected {expected}")]
    Syntax { pos: usize, expected: String },

    #[error("unknown kernel name `{name}` at byte {pos}")]
    UnknownKernelName { pos: usize, name: String },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("empty hyperparameter grid")]
    EmptyGrid,

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("requested {k} components but at most {max} are available")]
    KTooLarge { k: usize, max: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("bad magic bytes (not a CBX/bundle file)")]
    BadMagic,

    #[error("file truncated: {0}")]
    TruncatedFile(String),

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("variable `{0}` not present in dataset")]
    MissingVariable(String),

    #[error("window `{0}` covers no years of the dataset")]
    WindowNotCovered(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
