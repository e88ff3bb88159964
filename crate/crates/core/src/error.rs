use std::io;

/// Errors produced by the kernel.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A weight, latent or filter-bank file could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    #[error("tensor `{tensor}` is incomplete: {reason}")]
    Truncated { tensor: String, reason: String },

    #[error("shape-plan mismatch at `{tensor}`: {detail}")]
    ShapePlan { tensor: String, detail: String },

    #[error(
        "config fingerprint mismatch: expected {expected:016x} ({config}), found {found:016x}"
    )]
    Fingerprint {
        expected: u64,
        found: u64,
        config: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
