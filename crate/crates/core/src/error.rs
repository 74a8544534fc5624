use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("QBER undefined: gain is zero")]
    UndefinedQber,

    #[error("invalid timeline budget: total duration is zero")]
    InvalidBudget,

    #[error("invalid block: expected {expected} bits, got {got}")]
    InvalidBlock { expected: usize, got: usize },

    #[error("invalid code rate: {0}")]
    InvalidRate(String),

    #[error("invalid input: expected {expected} bits, got {got}")]
    InvalidInput { expected: usize, got: usize },

    #[error("invalid decoy configuration: {0}")]
    InvalidDecoyConfig(String),

    #[error("single-photon error rate unbounded: single-photon yield bound is zero")]
    UnboundedError,

    #[error("insufficient data: no pulses sent in class {0}")]
    InsufficientData(&'static str),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("framing error: {0}")]
    Framing(String),

    #[error("protocol violation in phase {phase}: {detail}")]
    ProtocolViolation { phase: String, detail: String },

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("decode failure budget exceeded: {failed} of {total} blocks failed")]
    DecodeBudget { failed: usize, total: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Whether the error is a parameter/configuration validation failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::InvalidRate(_)
                | Error::InvalidDecoyConfig(_)
                | Error::InsufficientData(_)
                | Error::ConfigParse { .. }
                | Error::UnknownKeys(_)
                | Error::Validation { .. }
                | Error::InvalidBudget
                | Error::Csv(_)
        )
    }

    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            Error::Protocol(_) | Error::Framing(_) | Error::ProtocolViolation { .. }
        )
    }
}
