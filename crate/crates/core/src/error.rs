use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure categories shared by every module.
///
/// `category()` gives the stable prefix used on the command line
/// (`CONFIG`, `DATA`, `NUMERIC`, `IO`).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("empty mask: no jointly valid pixels")]
    EmptyMask,
    #[error("stale tape: backward already ran on this graph")]
    StaleTape,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Dimension(_) => "CONFIG",
            Error::Numeric(_) => "NUMERIC",
            Error::Io(_) => "IO",
            Error::Data(_)
            | Error::EmptyMask
            | Error::Contract(_)
            | Error::Format(_)
            | Error::Length(_)
            | Error::StaleTape => "DATA",
        }
    }
}

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(alloc::format!($($arg)*)) };
}
macro_rules! cfg_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}
pub(crate) use cfg_err;
pub(crate) use dim_err;
