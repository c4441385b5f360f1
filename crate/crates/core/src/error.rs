use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid spectrum: mu = {mu}, L = {ell}")]
    InvalidSpectrum { mu: f64, ell: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance factorization failed: matrix is not positive definite")]
    Factorization,
    #[error("missing hyperparameter `{0}`")]
    MissingHyperparameter(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameter(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("convergence risk undefined: estimated convergence probability is zero")]
    UndefinedRisk,
    #[error("regime not supported: {0}")]
    UnsupportedRegime(String),
    #[error("all particles are excluded from the posterior support")]
    AllExcluded,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("prior construction failed in round {round}: {reason}")]
    PriorConstructionFailed { round: usize, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed dataset file (line {line}): {reason}")]
    DatasetFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid-dimension",
            Error::InvalidSpectrum { .. } => "invalid-spectrum",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::Factorization => "factorization",
            Error::MissingHyperparameter(_) => "missing-hyperparameter",
            Error::InvalidHyperparameter(_) => "invalid-hyperparameter",
            Error::Empty(_) => "empty-input",
            Error::UndefinedRisk => "undefined-risk",
            Error::UnsupportedRegime(_) => "unsupported-regime",
            Error::AllExcluded => "all-excluded",
            Error::InvalidPrior(_) => "invalid-prior",
            Error::PriorConstructionFailed { .. } => "prior-construction-failed",
            Error::Config(_) => "config",
            Error::DatasetFormat { .. } => "dataset-format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
