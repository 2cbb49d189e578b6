use alloc::string::String;

/// Errors produced by the core operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A value violates a domain invariant (duplicate ids, bad box, ...).
    #[error("validation error: {0}")]
    Validation(String),
    /// A caller-supplied argument is outside its allowed range.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A category, object or annotation id is not known.
    #[error("unknown {kind} id {id}")]
    NotFound { kind: &'static str, id: String },
    /// Human-object association could not be performed for an image.
    #[error("association error for image {image_id}: {reason}")]
    Association { image_id: String, reason: String },
    /// Evaluation settings are incomplete for the requested mode.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! validation {
    ($($arg:tt)*) => { $crate::error::Error::Validation(alloc::format!($($arg)*)) };
}

macro_rules! argument {
    ($($arg:tt)*) => { $crate::error::Error::Argument(alloc::format!($($arg)*)) };
}

pub(crate) use argument;
pub(crate) use validation;
