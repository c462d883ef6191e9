use thiserror::Error;

/// Errors produced by the tensor, compression, assembly and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode {0}: expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate tensor dimensions {0:?}")]
    DegenerateDims([usize; 3]),

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("invalid tolerance {0}: must be finite and non-negative")]
    InvalidTolerance(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular point: {0}")]
    SingularPoint(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error indicator {indicator:e}")]
    QuadratureNotConverged { estimate: f64, indicator: f64 },

    #[error("operator is missing the {0} form required by the selected strategy")]
    MissingForm(&'static str),

    #[error("scratch policy {policy} cannot be used with strategy {strategy}")]
    ScratchPolicy {
        policy: &'static str,
        strategy: &'static str,
    },

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("container format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
