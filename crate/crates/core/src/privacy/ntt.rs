//! Number-theoretic transform over the prime 998244353 = 119 * 2^23 + 1.

pub const MODULUS: u64 = 998_244_353;
const GENERATOR: u64 = 3;
/// Largest supported transform length.
pub const MAX_LEN: usize = 1 << 23;

fn pow_mod(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base %= MODULUS;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % MODULUS;
        }
        base = base * base % MODULUS;
        exp >>= 1;
    }
    acc
}

/// In-place iterative radix-2 transform. `a.len()` must be a power of two
/// no larger than [`MAX_LEN`].
pub fn ntt(a: &mut [u64], invert: bool) {
    let n = a.len();
    debug_assert!(n.is_power_of_two() && n <= MAX_LEN);
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j ^= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let mut w_len = pow_mod(GENERATOR, (MODULUS - 1) / len as u64);
        if invert {
            w_len = pow_mod(w_len, MODULUS - 2);
        }
        let half = len / 2;
        let twiddles: Vec<u64> = std::iter::successors(Some(1u64), |&w| Some(w * w_len % MODULUS))
            .take(half)
            .collect();
        for chunk in a.chunks_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((u, v), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let x = *u;
                let y = *v * w % MODULUS;
                *u = if x + y >= MODULUS { x + y - MODULUS } else { x + y };
                *v = if x >= y { x - y } else { x + MODULUS - y };
            }
        }
        len <<= 1;
    }
    if invert {
        let inv_n = pow_mod(n as u64, MODULUS - 2);
        for x in a.iter_mut() {
            *x = *x * inv_n % MODULUS;
        }
    }
}

/// Exact integer convolution of two 0/1 sequences. Each output counts at most
/// `min(a.len(), b.len())` products, which stays below the modulus.
pub fn convolve_bits(a: &[u8], b: &[u8]) -> Option<Vec<u64>> {
    if a.is_empty() || b.is_empty() {
        return Some(Vec::new());
    }
    let out_len = a.len() + b.len() - 1;
    let size = out_len.next_power_of_two();
    if size > MAX_LEN {
        return None;
    }
    let mut fa: Vec<u64> = a.iter().map(|&x| x as u64 & 1).collect();
    let mut fb: Vec<u64> = b.iter().map(|&x| x as u64 & 1).collect();
    fa.resize(size, 0);
    fb.resize(size, 0);
    ntt(&mut fa, false);
    ntt(&mut fb, false);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = *x * y % MODULUS;
    }
    ntt(&mut fa, true);
    fa.truncate(out_len);
    Some(fa)
}
