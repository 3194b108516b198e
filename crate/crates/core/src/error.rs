//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),

    /// Input matrix does not have the required (numerical) rank.
    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    /// A matrix that must have orthonormal columns does not.
    #[error("matrix is not orthonormal: {0}")]
    NotOrthonormal(String),

    /// Invalid argument or configuration value.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The posterior mean of the basis is numerically rank-deficient, so its
    /// range cannot identify a full p-dimensional subspace.
    #[error("degenerate posterior mean: achievable rank {rank} below requested {requested}")]
    DegenerateMean { rank: usize, requested: usize },

    /// The requested closed form does not exist for this prior.
    #[error("no closed form under the {0} prior")]
    UnsupportedPrior(String),

    /// An operation that needs posterior samples received an empty chain.
    #[error("empty chain")]
    EmptyChain,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed on-disk data; names the offending field.
    #[error("format error in `{field}`: {message}")]
    Format { field: String, message: String },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}
