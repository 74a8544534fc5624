use std::sync::OnceLock;

use proptest::prelude::*;
use qkd_core::bits::{random_bits, xor_bits};
use qkd_core::ldpc::{decode, generate_code, leakage_bits, reconciliation_efficiency, LdpcCode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn code() -> &'static LdpcCode {
    static CODE: OnceLock<LdpcCode> = OnceLock::new();
    CODE.get_or_init(|| generate_code(2000, 0.035, 1.2, 17).unwrap())
}

fn success_rate(qber: f64, blocks: usize, seed: u64) -> f64 {
    let code = code();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0;
    for _ in 0..blocks {
        let alice = random_bits(&mut rng, code.n());
        let noise: Vec<u8> = (0..code.n()).map(|_| rng.random_bool(qber) as u8).collect();
        let r = decode(code, &xor_bits(&alice, &noise), &code.parities(&alice).unwrap(), 0.035, 60).unwrap();
        ok += (r.success && r.corrected == alice) as usize;
    }
    ok as f64 / blocks as f64
}

#[test]
fn success_falls_as_qber_rises() {
    let easy = success_rate(0.01, 30, 1);
    let design = success_rate(0.03, 30, 2);
    let hard = success_rate(0.08, 30, 3);
    assert_eq!(easy, 1.0);
    assert!(design >= hard, "{design} < {hard}");
    assert_eq!(hard, 0.0);
}

#[test]
fn flipped_positions_are_the_corrections() {
    let code = code();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let alice = random_bits(&mut rng, code.n());
        let noise: Vec<u8> = (0..code.n()).map(|_| rng.random_bool(0.02) as u8).collect();
        let bob = xor_bits(&alice, &noise);
        let r = decode(code, &bob, &code.parities(&alice).unwrap(), 0.035, 60).unwrap();
        let diff: Vec<usize> = (0..code.n()).filter(|&i| r.corrected[i] != bob[i]).collect();
        assert_eq!(r.flipped_positions, diff);
        if r.success {
            assert_eq!(code.parities(&r.corrected).unwrap(), code.parities(&alice).unwrap());
        }
    }
}

#[test]
fn leakage_and_efficiency() {
    let code = code();
    assert_eq!(leakage_bits(code), code.m());
    let f = reconciliation_efficiency(code, 0.035).unwrap().unwrap();
    let step = 1.0 / (code.n() as f64 * qkd_core::decoy::binary_entropy(0.035).unwrap());
    assert!(f >= 1.2 && f < 1.2 + step, "f {f}");
    assert_eq!(reconciliation_efficiency(code, 0.0).unwrap(), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn syndrome_is_linear(seed in any::<u64>()) {
        let code = code();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_bits(&mut rng, code.n()), random_bits(&mut rng, code.n()));
        let lhs = code.parities(&xor_bits(&a, &b)).unwrap();
        let rhs = xor_bits(&code.parities(&a).unwrap(), &code.parities(&b).unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn decoding_matching_words_is_a_no_op(seed in any::<u64>()) {
        let code = code();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_bits(&mut rng, code.n());
        let r = decode(code, &a, &code.parities(&a).unwrap(), 0.035, 10).unwrap();
        prop_assert!(r.success);
        prop_assert_eq!(r.iterations_used, 0);
        prop_assert_eq!(r.corrected, a);
    }
}
