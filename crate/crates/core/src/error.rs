use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
    #[error("invalid application: {0}")]
    InvalidApplication(String),
    #[error("invalid device set: {0}")]
    InvalidDevices(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("instance too large: {count} placements exceeds cap {cap}")]
    TooLarge { count: u128, cap: u128 },
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error("terminal state: no eligible service")]
    Terminal,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("autodiff usage error: {0}")]
    Usage(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("architecture mismatch: {0}")]
    Architecture(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
