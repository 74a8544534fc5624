//! Bit-vector helpers shared by the reconciliation, hashing and wire layers.
//!
//! Bits are carried as one `u8` per bit (0 or 1) in the algorithmic code and
//! packed LSB-first into bytes on the wire.

use rand::Rng;

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

/// Unpacks the first `n` bits of an LSB-first bitmap. Missing bytes read as 0.
pub fn unpack_bits(bytes: &[u8], n: usize) -> Vec<u8> {
    (0..n)
        .map(|i| bytes.get(i / 8).map_or(0, |byte| (byte >> (i % 8)) & 1))
        .collect()
}

pub fn xor_bits(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let word: u64 = rng.random();
        let take = (n - out.len()).min(64);
        out.extend((0..take).map(|i| ((word >> i) & 1) as u8));
    }
    out
}

pub fn hamming_weight(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b != 0).count()
}

/// Packs bits into little-endian u64 words (bit i lives in word i/64, position i%64).
pub fn to_words(bits: &[u8]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

/// 64-bit polynomial digest over the bit string, evaluated modulo 2^61 - 1.
///
/// The packed bytes are the coefficients; `param` is the public evaluation
/// point, and the bit length is folded in last so that strings differing only
/// in trailing zeros do not collide.
pub fn poly_digest(bits: &[u8], param: u64) -> u64 {
    const P: u128 = (1u128 << 61) - 1;
    let x = (param as u128 % (P - 2)) + 2;
    let mut acc: u128 = 0;
    for byte in pack_bits(bits) {
        acc = (acc * x + byte as u128 + 1) % P;
    }
    acc = (acc * x + bits.len() as u128) % P;
    acc as u64
}

/// SplitMix64 finaliser, used to derive independent sub-seeds from a session seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
