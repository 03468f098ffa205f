use alloc::string::String;

/// Errors raised by the simulator, primitive library and trainer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A task or experiment description is malformed.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller passed a value that violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),
    /// Training produced a non-finite loss or parameter.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
