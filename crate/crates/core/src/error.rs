use thiserror::Error;

/// Errors surfaced by the simulation and training kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("coincident endpoints ({context}): path loss is singular; re-draw the drop")]
    CoincidentEndpoints { context: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("insufficient slots: need {needed}, have {available}")]
    InsufficientSlots { needed: usize, available: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
