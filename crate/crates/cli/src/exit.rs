//! Process exit codes.

use qkd_core::Error;

pub const OK: u8 = 0;
pub const USAGE: u8 = 1;
pub const VALIDATION: u8 = 2;
pub const PROTOCOL: u8 = 3;
pub const DECODE_BUDGET: u8 = 4;

/// Maps a failure to its exit code. I/O failures count as protocol errors
/// for networked commands and as usage errors (bad paths) otherwise.
pub fn code_for(err: &anyhow::Error, networked: bool) -> u8 {
    let io = if networked { PROTOCOL } else { USAGE };
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::DecodeBudget { .. } => DECODE_BUDGET,
                Error::Io(_) => io,
                e if e.is_protocol() => PROTOCOL,
                _ => VALIDATION,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return io;
        }
    }
    USAGE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        let v: anyhow::Error = Error::InsufficientData("nu2").into();
        assert_eq!(code_for(&v, false), VALIDATION);
        let p: anyhow::Error = Error::Protocol("x".into()).into();
        assert_eq!(code_for(&p, true), PROTOCOL);
        let b: anyhow::Error = Error::DecodeBudget { failed: 3, total: 10 }.into();
        assert_eq!(code_for(&b.context("netrun"), true), DECODE_BUDGET);
        let io: anyhow::Error = std::io::Error::other("refused").into();
        assert_eq!(code_for(&io, true), PROTOCOL);
        assert_eq!(code_for(&io, false), USAGE);
        assert_eq!(code_for(&Error::UnboundedError.into(), false), VALIDATION);
    }
}
