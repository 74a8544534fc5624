//! Frame-error-rate measurement for a generated code.
//!
//! usage: ldpc_fer [qber] [blocks] [f] [n] [profile: d:frac,d:frac,...]

use qkd_core::bits::{random_bits, xor_bits};
use qkd_core::ldpc::{decode, generate_code_with_profile, DegreeProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let qber: f64 = args.get(1).map_or(0.035, |s| s.parse().unwrap());
    let blocks: usize = args.get(2).map_or(200, |s| s.parse().unwrap());
    let f: f64 = args.get(3).map_or(1.2, |s| s.parse().unwrap());
    let n: usize = args.get(4).map_or(10_000, |s| s.parse().unwrap());
    let profile = args.get(5).map_or_else(DegreeProfile::default, |s| DegreeProfile {
        variable: s
            .split(',')
            .map(|p| {
                let (d, fr) = p.split_once(':').unwrap();
                (d.parse().unwrap(), fr.parse().unwrap())
            })
            .collect(),
    });
    let t = std::time::Instant::now();
    let code = generate_code_with_profile(n, 0.035, f, 1, &profile).unwrap();
    println!("built n={} m={} edges={} 4-cycles={} in {:?}", code.n(), code.m(), code.edges(), code.four_cycles(), t.elapsed());
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let t = std::time::Instant::now();
    let (mut ok, mut iters) = (0, 0);
    for _ in 0..blocks {
        let alice = random_bits(&mut rng, n);
        let noise: Vec<u8> = (0..n).map(|_| rng.random_bool(qber) as u8).collect();
        let bob = xor_bits(&alice, &noise);
        let s = code.parities(&alice).unwrap();
        let r = decode(&code, &bob, &s, qber, 100).unwrap();
        if r.success && r.corrected == alice {
            ok += 1;
        } else {
            let weight = noise.iter().filter(|&&b| b == 1).count();
            println!("  failure: weight {weight} iterations {} converged {}", r.iterations_used, r.success);
        }
        iters += r.iterations_used;
    }
    println!("qber={qber} success {ok}/{blocks} avg iters {:.1} time {:?}", iters as f64 / blocks as f64, t.elapsed());
}
