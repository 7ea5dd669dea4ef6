use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("gaussian {index}: {reason}")]
    InvalidGaussian { index: usize, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("stale contribution buffer: built at scene revision {buffer}, scene is at {scene}")]
    Stale { buffer: u64, scene: u64 },

    #[error("numerical error in layer {layer}: {detail}")]
    Numerical { layer: u32, detail: String },

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: u32, detail: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
