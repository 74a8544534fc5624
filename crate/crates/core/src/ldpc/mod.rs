//! LDPC syndrome reconciliation.
//!
//! Alice discloses the syndrome of her sifted block under a sparse
//! parity-check matrix; Bob runs sum-product belief propagation to find the
//! error pattern that reconciles his noisy copy with that syndrome.

mod code;
mod decode;

pub use code::{check_count, generate_code, generate_code_with_profile, DegreeProfile, LdpcCode};
pub use decode::{decode, DecodeResult, DEFAULT_MAX_ITERATIONS};

use crate::decoy::binary_entropy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Syndrome {
    pub bits: Vec<u8>,
    pub code_id: u32,
    pub block_id: u32,
}

/// Parity of every check over `bits`.
pub fn syndrome(code: &LdpcCode, bits: &[u8]) -> Result<Syndrome> {
    Ok(Syndrome { bits: code.parities(bits)?, code_id: code.code_id(), block_id: 0 })
}

/// Disclosed parity bits per block.
pub fn leakage_bits(code: &LdpcCode) -> usize {
    code.m()
}

/// Reconciliation efficiency `m / (n H2(qber))`; `None` when the QBER is zero.
pub fn reconciliation_efficiency(code: &LdpcCode, measured_qber: f64) -> Result<Option<f64>> {
    if !(0.0..=1.0).contains(&measured_qber) {
        return Err(Error::param("measured_qber", "must lie in [0, 1]"));
    }
    if measured_qber == 0.0 {
        return Ok(None);
    }
    Ok(Some(code.m() as f64 / (code.n() as f64 * binary_entropy(measured_qber)?)))
}
