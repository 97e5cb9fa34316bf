use thiserror::Error;

/// Errors raised by the mixflow library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("mixture density is not positive at {x:?}")]
    NonPositiveDensity { x: Vec<f64> },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("unsupported dimension {dim}: {reason}")]
    UnsupportedDimension { dim: usize, reason: String },

    #[error("argument {0} outside the function domain")]
    Domain(f64),

    #[error("sparse grid is empty: level {level} < dimension {dim}")]
    EmptyGrid { level: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("integrator exceeded {max_steps} steps at t = {t}")]
    Stiffness {
        max_steps: usize,
        t: f64,
        x: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("componentwise budget too small: component {component} receives no points")]
    InsufficientBudget { component: usize },

    #[error("not enough data to fit a rate: {usable} usable points, need {required}")]
    InsufficientData { usable: usize, required: usize },

    #[error("importance weights are all zero")]
    DegenerateWeights,

    #[error(
        "reference value unresolved: oracle spread {spread:e} exceeds tolerance {tolerance:e}"
    )]
    UnresolvedReference {
        value: f64,
        spread: f64,
        tolerance: f64,
    },

    #[error("transport of point {index} failed: {source}")]
    TransportFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown integrand `{0}`")]
    UnknownIntegrand(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that stem from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonPositiveDensity { .. }
            | Error::Stiffness { .. }
            | Error::Numerical(_)
            | Error::DegenerateWeights
            | Error::UnresolvedReference { .. } => true,
            Error::TransportFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
