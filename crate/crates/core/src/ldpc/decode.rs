use super::LdpcCode;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERATIONS: usize = 100;

const LLR_CLAMP: f64 = 40.0;
const TANH_CLAMP: f64 = 1.0 - 1e-15;

/// `tanh(l / 2)` with a single exponential.
fn tanh_half_llr(l: f64) -> f64 {
    let t = (-l.abs()).exp();
    ((1.0 - t) / (1.0 + t)).copysign(l)
}

/// `2 atanh(p)`, saturated.
fn two_atanh(p: f64) -> f64 {
    let p = p.clamp(-TANH_CLAMP, TANH_CLAMP);
    ((1.0 + p) / (1.0 - p)).ln().clamp(-LLR_CLAMP, LLR_CLAMP)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub success: bool,
    /// `noisy XOR error estimate`; on failure, the last hard decision.
    pub corrected: Vec<u8>,
    pub iterations_used: usize,
    pub flipped_positions: Vec<usize>,
    pub estimated_qber: f64,
}

/// Sum-product syndrome decoding with a layered (check-serial) schedule.
///
/// Finds an error pattern `e` with `H(noisy XOR e) = alice_syndrome`, i.e.
/// `H e = H noisy XOR alice_syndrome`, starting from the channel prior
/// `ln((1 - q) / q)` on every bit. The syndrome condition is tested before
/// the first iteration and after each one; the decoder stops as soon as it
/// holds and reports failure once `max_iterations` pass without it.
pub fn decode(
    code: &LdpcCode,
    noisy: &[u8],
    alice_syndrome: &[u8],
    qber_prior: f64,
    max_iterations: usize,
) -> Result<DecodeResult> {
    if noisy.len() != code.n() {
        return Err(Error::InvalidBlock { expected: code.n(), got: noisy.len() });
    }
    if alice_syndrome.len() != code.m() {
        return Err(Error::InvalidBlock { expected: code.m(), got: alice_syndrome.len() });
    }
    if !(qber_prior > 0.0 && qber_prior < 0.5) {
        return Err(Error::param("qber_prior", "must lie in (0, 0.5)"));
    }
    if max_iterations == 0 {
        return Err(Error::param("max_iterations", "must be at least 1"));
    }

    let target: Vec<u8> = code
        .parities(noisy)?
        .iter()
        .zip(alice_syndrome)
        .map(|(a, b)| a ^ (b & 1))
        .collect();

    let graph = Graph::new(code);
    let prior = ((1.0 - qber_prior) / qber_prior).ln();
    let mut c2v = vec![0.0f64; graph.edge_var.len()];
    let mut total = vec![prior; code.n()];
    let mut error = vec![0u8; code.n()];
    let mut incoming = Vec::new();
    let mut tanh_half = Vec::new();

    let mut iterations = 0;
    let mut success = graph.satisfied(&error, &target);
    while !success && iterations < max_iterations {
        iterations += 1;

        // one pass over the checks, refreshing posteriors after each check
        for (j, &s) in target.iter().enumerate() {
            let (lo, hi) = (graph.check_start[j], graph.check_start[j + 1]);
            let vars = &graph.edge_var[lo..hi];
            incoming.clear();
            incoming.extend(
                vars.iter()
                    .zip(&c2v[lo..hi])
                    .map(|(&v, &m)| (total[v as usize] - m).clamp(-LLR_CLAMP, LLR_CLAMP)),
            );
            tanh_half.clear();
            tanh_half.extend(incoming.iter().map(|&l| tanh_half_llr(l)));

            let sign = if s == 1 { -1.0 } else { 1.0 };
            let mut prefix = 1.0;
            for (k, e) in (lo..hi).enumerate() {
                c2v[e] = prefix;
                prefix *= tanh_half[k];
            }
            let mut suffix = 1.0;
            for (k, e) in (lo..hi).enumerate().rev() {
                let msg = sign * two_atanh(c2v[e] * suffix);
                suffix *= tanh_half[k];
                c2v[e] = msg;
                total[vars[k] as usize] = incoming[k] + msg;
            }
        }

        for (e, t) in error.iter_mut().zip(&total) {
            *e = (*t < 0.0) as u8;
        }
        success = graph.satisfied(&error, &target);
    }

    let flipped_positions: Vec<usize> = (0..code.n()).filter(|&i| error[i] == 1).collect();
    let corrected = noisy.iter().zip(&error).map(|(b, e)| b ^ e).collect();
    Ok(DecodeResult {
        success,
        corrected,
        iterations_used: iterations,
        estimated_qber: flipped_positions.len() as f64 / code.n() as f64,
        flipped_positions,
    })
}

/// Edge-indexed Tanner graph with edges in check order.
struct Graph {
    check_start: Vec<usize>,
    edge_var: Vec<u32>,
}

impl Graph {
    fn new(code: &LdpcCode) -> Self {
        let mut check_start = Vec::with_capacity(code.m() + 1);
        let mut edge_var = Vec::with_capacity(code.edges());
        check_start.push(0);
        for row in code.checks() {
            edge_var.extend_from_slice(row);
            check_start.push(edge_var.len());
        }
        Graph { check_start, edge_var }
    }

    fn satisfied(&self, error: &[u8], target: &[u8]) -> bool {
        target.iter().enumerate().all(|(j, &s)| {
            let parity = self.edge_var[self.check_start[j]..self.check_start[j + 1]]
                .iter()
                .fold(0u8, |acc, &v| acc ^ error[v as usize]);
            parity == s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{random_bits, xor_bits};
    use crate::ldpc::generate_code;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> LdpcCode {
        LdpcCode::from_checks(6, vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 0]]).unwrap()
    }

    #[test]
    fn zero_errors_succeed_immediately() {
        let code = generate_code(1000, 0.035, 1.2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits = random_bits(&mut rng, 1000);
        let s = code.parities(&bits).unwrap();
        let r = decode(&code, &bits, &s, 0.035, 50).unwrap();
        assert!(r.success);
        assert_eq!(r.iterations_used, 0);
        assert_eq!(r.corrected, bits);
        assert_eq!(r.estimated_qber, 0.0);
    }

    #[test]
    fn toy_single_error_is_corrected() {
        let code = toy();
        let alice = vec![1, 0, 1, 0, 1, 0];
        let s = code.parities(&alice).unwrap();
        let mut bob = alice.clone();
        bob[1] ^= 1;
        let r = decode(&code, &bob, &s, 0.1, 20).unwrap();
        assert!(r.success);
        assert_eq!(r.corrected, alice);
        assert_eq!(r.flipped_positions, vec![1]);
    }

    #[test]
    fn argument_errors() {
        let code = toy();
        assert!(matches!(decode(&code, &[0; 5], &[0; 3], 0.1, 5), Err(Error::InvalidBlock { .. })));
        assert!(matches!(decode(&code, &[0; 6], &[0; 2], 0.1, 5), Err(Error::InvalidBlock { .. })));
        assert!(decode(&code, &[0; 6], &[0; 3], 0.5, 5).is_err());
        assert!(decode(&code, &[0; 6], &[0; 3], 0.1, 0).is_err());
    }

    #[test]
    fn failure_is_a_flag_not_an_error() {
        let code = generate_code(1000, 0.02, 1.2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alice = random_bits(&mut rng, 1000);
        let s = code.parities(&alice).unwrap();
        // 20% errors is far beyond what this code can correct
        let noise: Vec<u8> = (0..1000).map(|i| (i % 5 == 0) as u8).collect();
        let bob = xor_bits(&alice, &noise);
        let r = decode(&code, &bob, &s, 0.02, 10).unwrap();
        assert!(!r.success);
        assert_eq!(r.iterations_used, 10);
    }

    #[test]
    fn success_implies_syndrome_match() {
        let code = generate_code(2000, 0.035, 1.2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let alice = random_bits(&mut rng, 2000);
            let noise: Vec<u8> = (0..2000).map(|_| rand::Rng::random_bool(&mut rng, 0.02) as u8).collect();
            let bob = xor_bits(&alice, &noise);
            let s = code.parities(&alice).unwrap();
            let r = decode(&code, &bob, &s, 0.02, 100).unwrap();
            if r.success {
                assert_eq!(code.parities(&r.corrected).unwrap(), s);
                assert!(r.iterations_used <= 100);
            }
        }
    }
}
