use std::io;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// `Contract` is a violated precondition (wrong shapes, out-of-range inputs).
/// `Numeric` is a non-finite value produced by a named operation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric fault in `{op}`: {detail}")]
    Numeric { op: &'static str, detail: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
