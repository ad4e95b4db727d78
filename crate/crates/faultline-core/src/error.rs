//! Error type shared across the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building, executing, or scoring
/// a pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A declaration is malformed: bad threshold range, unknown
    /// reference, incompatible payload kind, and so on.
    #[error("configuration error: {0}")]
    Config(String),

    /// A metric or relation was evaluated on values it cannot handle
    /// (non-finite numbers, mismatched dimensions, wrong payload kind).
    #[error("evaluation error: {0}")]
    Eval(String),

    /// Two artifacts that must describe the same pipeline or campaign
    /// disagree, e.g. trace trees produced under different specs.
    #[error("mismatched artifacts: {0}")]
    Mismatch(String),

    /// Persisted state fails an integrity check (corrupt event log,
    /// broken per-record checksum, unreconstructable trace).
    #[error("integrity error at line {line}: {message}")]
    Integrity { line: u64, message: String },

    /// Internal counters ended up in a state that violates a documented
    /// invariant. Indicates a bug rather than bad input.
    #[error("inconsistent state: {0}")]
    Inconsistent(String),
}

impl Error {
    /// Builds an integrity error that is not tied to a specific line.
    pub fn integrity(message: impl Into<String>) -> Self {
        Error::Integrity { line: 0, message: message.into() }
    }
}
