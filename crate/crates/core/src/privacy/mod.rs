//! Toeplitz-hash privacy amplification and secret-length accounting.
//!
//! The hash matrix is `T[i][j] = seed[i + n_in - 1 - j]`, so each output bit is
//! `out[i] = XOR_j seed[i + n_in - 1 - j] & input[j]`. That is exactly entry
//! `i + n_in - 1` of the integer convolution `seed * input`, which the fast
//! path computes with a number-theoretic transform before reducing mod 2.

pub mod ntt;

use rand::Rng;

use crate::bits::{random_bits, to_words};
use crate::decoy::{binary_entropy, DecoyEstimates};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzSeed {
    bits: Vec<u8>,
    n_in: usize,
    n_out: usize,
}

impl ToeplitzSeed {
    pub fn new(bits: Vec<u8>, n_in: usize, n_out: usize) -> Result<Self> {
        if n_out > n_in {
            return Err(Error::param("n_out", "must not exceed n_in"));
        }
        let expected = seed_len(n_in, n_out);
        if bits.len() != expected {
            return Err(Error::InvalidInput { expected, got: bits.len() });
        }
        Ok(ToeplitzSeed { bits, n_in, n_out })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_in: usize, n_out: usize) -> Result<Self> {
        Self::new(random_bits(rng, seed_len(n_in, n_out)), n_in, n_out)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    fn check_input(&self, input: &[u8]) -> Result<()> {
        if input.len() != self.n_in {
            return Err(Error::InvalidInput { expected: self.n_in, got: input.len() });
        }
        Ok(())
    }
}

fn seed_len(n_in: usize, n_out: usize) -> usize {
    if n_out == 0 {
        0
    } else {
        n_in + n_out - 1
    }
}

/// Matrix-vector product over GF(2), one packed row at a time.
pub fn toeplitz_hash(seed: &ToeplitzSeed, input: &[u8]) -> Result<Vec<u8>> {
    seed.check_input(input)?;
    if seed.n_out == 0 {
        return Ok(Vec::new());
    }
    // r[k] = seed[L - 1 - k]; row i of T is r[n_out - 1 - i ..][..n_in]
    let reversed: Vec<u8> = seed.bits.iter().rev().copied().collect();
    let mut r_words = to_words(&reversed);
    r_words.push(0);
    let in_words = to_words(input);
    let out = (0..seed.n_out)
        .map(|i| {
            let offset = seed.n_out - 1 - i;
            let (word, shift) = (offset / 64, offset % 64);
            let parity = in_words.iter().enumerate().fold(0u32, |acc, (w, &x)| {
                let lo = r_words[word + w] >> shift;
                let hi = if shift == 0 { 0 } else { r_words[word + w + 1] << (64 - shift) };
                acc ^ ((lo | hi) & x).count_ones()
            });
            (parity & 1) as u8
        })
        .collect();
    Ok(out)
}

/// Same output as [`toeplitz_hash`], via NTT convolution.
pub fn toeplitz_hash_ntt(seed: &ToeplitzSeed, input: &[u8]) -> Result<Vec<u8>> {
    seed.check_input(input)?;
    if seed.n_out == 0 {
        return Ok(Vec::new());
    }
    let conv = ntt::convolve_bits(&seed.bits, input)
        .ok_or_else(|| Error::param("n_in", "input too long for the transform size"))?;
    Ok(conv[seed.n_in - 1..seed.n_in - 1 + seed.n_out].iter().map(|&c| (c & 1) as u8).collect())
}

/// Where a secret key came from.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyProvenance {
    pub blocks_consumed: usize,
    pub leakage_bits: u64,
    pub estimates: Option<DecoyEstimates>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecretKey {
    pub bits: Vec<u8>,
    pub provenance: KeyProvenance,
}

impl SecretKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Secret length for `n_corrected` corrected signal bits:
/// `floor(n (Q1_L / Q_mu)(1 - H2(e1_U)) - leakage - margin)`, or 0 when negative.
pub fn final_key_length(n_corrected: u64, estimates: &DecoyEstimates, leakage_total: u64, margin: u64) -> usize {
    if estimates.q_mu <= 0.0 {
        return 0;
    }
    let e1 = estimates.e1_u.clamp(0.0, 0.5);
    let entropy = 1.0 - binary_entropy(e1).expect("clamped");
    let secret = n_corrected as f64 * (estimates.q1_l / estimates.q_mu) * entropy
        - leakage_total as f64
        - margin as f64;
    if secret <= 0.0 {
        0
    } else {
        secret.floor() as usize
    }
}
