use thiserror::Error;

/// Errors produced by the watermarking toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A tensor file did not match the on-disk format.
    #[error("tensor format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// An input was too degenerate for the requested statistic
    /// (e.g. the masked spectrum has no energy).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The scaler acceptance criterion is undefined for the given scaler
    /// (its denominator is not positive).
    #[error("criterion undefined: {0}")]
    CriterionUndefined(String),

    /// A truncated series hit its hard term cap before converging.
    #[error("series did not converge within {max_terms} terms")]
    SeriesCap { max_terms: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
