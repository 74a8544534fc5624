//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every criterion always runs to completion and reports. The process exits
//! non-zero on a FAIL only when `QKD_ACCEPTANCE_STRICT=1` is set.

use std::time::{Duration, Instant};

use qkd_core::bits::{random_bits, xor_bits};
use qkd_core::channel::{error_gain_for_eta, gain_for_eta, IntensityClass, PulseConfig};
use qkd_core::config::Scenario;
use qkd_core::decoy::{analyze_tally, estimate, secret_fraction, DecoyEstimates, Gains, KeyRateParams, VacuumYield};
use qkd_core::framing::{build_frame, duty_cycle, timeline, ClockConfig, StageDefaults};
use qkd_core::ldpc::{decode, generate_code, LdpcCode};
use qkd_core::link::run_tcp_loopback;
use qkd_core::privacy::{final_key_length, toeplitz_hash, toeplitz_hash_ntt, ToeplitzSeed};
use qkd_core::report::{read_tally_csv, write_tally_csv};
use qkd_core::sifting::{alice_sifted, apply_mask, sift_mask, DecoyTally, DetectionReport};
use qkd_core::sim::{run, sweep_with_workers, RunBudget, SweepPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Independent high-precision evaluations (50 significant digits, rounded).
const WORKED_Y1_L: f64 = 9.677_151_024_762_283_2e-3;
const WORKED_E1_U: f64 = 0.011_468_894_689_416_279;
const WORKED_RATE: f64 = 1.092_975_378_496_981_8e-3;
const TOTAL_LOW_MS: f64 = 845.000_96;
const TOTAL_HIGH_MS: f64 = 920.000_96;

fn duty_cycle_budget() -> Outcome {
    let clock = ClockConfig::default();
    let stages = StageDefaults::default();
    let low = timeline(&clock, &stages, 55.0, true).map_err(|e| e.to_string())?;
    let high = timeline(&clock, &stages, 130.0, true).map_err(|e| e.to_string())?;
    let (d_low, d_high) = (duty_cycle(&high).unwrap(), duty_cycle(&low).unwrap());
    let totals_ok = (low.total - TOTAL_LOW_MS).abs() < 1e-5
        && (high.total - TOTAL_HIGH_MS).abs() < 1e-5
        && low.total.round() == 845.0
        && high.total.round() == 920.0;
    let duty_ok = (d_low - 100.0 / TOTAL_HIGH_MS).abs() < 1e-5
        && (d_high - 100.0 / TOTAL_LOW_MS).abs() < 1e-5
        && (d_low * 1e4).round() == 1087.0
        && (d_high * 1e4).round() == 1183.0;
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for g in 55..=130 {
        let d = duty_cycle(&timeline(&clock, &stages, g as f64, true).unwrap()).unwrap();
        monotone &= d < prev && (d_low - 1e-12..=d_high + 1e-12).contains(&d);
        prev = d;
    }
    check(
        totals_ok && duty_ok && monotone,
        format!(
            "totals {:.5}-{:.5} ms, duty {:.4}%-{:.4}%, monotone in g: {monotone}",
            low.total,
            high.total,
            100.0 * d_low,
            100.0 * d_high
        ),
    )
}

fn sifting_ratio() -> Outcome {
    let n = 1_000_000;
    let clock = ClockConfig { clock_rate_hz: 1e6, frame_qubits: n };
    let frame = build_frame(0, &clock, &PulseConfig::default(), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let report = DetectionReport { frame_number: 0, entries: (0..n as u32).map(|i| (i, rng.random_range(0..2u8))).collect() };
    let bob_bits: Vec<u8> = report
        .entries
        .iter()
        .map(|&(i, b)| {
            let q = frame.qubits[i as usize];
            if q.basis == b { q.bit } else { rng.random_range(0..2) }
        })
        .collect();
    let mask = sift_mask(&frame, &report).map_err(|e| e.to_string())?;
    let kept = mask.iter().filter(|&&k| k).count();
    let alice = alice_sifted(&frame, &report, &mask);
    let bob = apply_mask(&report, &bob_bits, &mask).map_err(|e| e.to_string())?;
    let ratio = kept as f64 / n as f64;
    check(
        (ratio - 0.5).abs() <= 0.002 && alice.bits == bob.bits && alice.len() == kept,
        format!("kept {kept}/{n} = {ratio:.5}, sifted strings agree: {}", alice.bits == bob.bits),
    )
}

fn toy_code() -> LdpcCode {
    LdpcCode::from_checks(6, vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 0]]).unwrap()
}

/// Exhaustive minimum-weight search over all 2^6 patterns with the syndrome of `e`.
fn coset_leaders(code: &LdpcCode, syndrome: &[u8]) -> Vec<Vec<u8>> {
    let patterns: Vec<Vec<u8>> = (0u32..64).map(|p| (0..6).map(|i| ((p >> i) & 1) as u8).collect()).collect();
    let coset: Vec<&Vec<u8>> = patterns.iter().filter(|p| code.parities(p).unwrap() == syndrome).collect();
    let min = coset.iter().map(|p| p.iter().filter(|&&b| b == 1).count()).min().unwrap();
    coset.into_iter().filter(|p| p.iter().filter(|&&b| b == 1).count() == min).cloned().collect()
}

fn ldpc_toy_oracle() -> Outcome {
    let code = toy_code();
    let alice = [0u8; 6];
    let zero = code.parities(&alice).unwrap();
    let (mut checked, mut agree) = (0, 0);
    for p in 1u32..64 {
        if !(1..=2).contains(&p.count_ones()) {
            continue;
        }
        let e: Vec<u8> = (0..6).map(|i| ((p >> i) & 1) as u8).collect();
        let leaders = coset_leaders(&code, &code.parities(&e).unwrap());
        if leaders.len() != 1 {
            continue;
        }
        checked += 1;
        let r = decode(&code, &e, &zero, 0.1, 50).unwrap();
        let found = xor_bits(&e, &r.corrected);
        if r.success && found == leaders[0] {
            agree += 1;
        }
    }
    check(checked > 0 && agree == checked, format!("{agree}/{checked} unique-leader patterns decoded to the leader"))
}

fn ldpc_block_success() -> Outcome {
    let (n, qber, blocks) = (10_000, 0.035, 200);
    let code = generate_code(n, qber, 1.2, 1).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ok, mut wrong) = (0, 0);
    for _ in 0..blocks {
        let alice = random_bits(&mut rng, n);
        let noise: Vec<u8> = (0..n).map(|_| rng.random_bool(qber) as u8).collect();
        let bob = xor_bits(&alice, &noise);
        let r = decode(&code, &bob, &code.parities(&alice).unwrap(), qber, 100).unwrap();
        if r.success {
            if r.corrected == alice {
                ok += 1;
            } else {
                wrong += 1;
            }
        }
    }
    let rate = ok as f64 / blocks as f64;
    check(
        rate >= 0.99 && wrong == 0,
        format!("m = {}, {ok}/{blocks} decoded ({:.1}%), {wrong} converged to a wrong word", code.m(), 100.0 * rate),
    )
}

fn toeplitz_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut largest = 0;
    for i in 0..1000 {
        let n_in = if i < 10 { 1 << 14 } else { rng.random_range(1..=1usize << 14) };
        let n_out = rng.random_range(1..=n_in);
        largest = largest.max(n_in);
        let seed = ToeplitzSeed::random(&mut rng, n_in, n_out).unwrap();
        let input = random_bits(&mut rng, n_in);
        if toeplitz_hash(&seed, &input).unwrap() != toeplitz_hash_ntt(&seed, &input).unwrap() {
            mismatches += 1;
        }
    }
    let mut linear = 0;
    for _ in 0..100 {
        let n_in = rng.random_range(1..=4096);
        let n_out = rng.random_range(1..=n_in);
        let seed = ToeplitzSeed::random(&mut rng, n_in, n_out).unwrap();
        let (x, y) = (random_bits(&mut rng, n_in), random_bits(&mut rng, n_in));
        let lhs = toeplitz_hash_ntt(&seed, &xor_bits(&x, &y)).unwrap();
        let rhs = xor_bits(&toeplitz_hash_ntt(&seed, &x).unwrap(), &toeplitz_hash_ntt(&seed, &y).unwrap());
        linear += (lhs == rhs) as usize;
    }
    check(
        mismatches == 0 && linear == 100,
        format!("1000 instances up to n_in = {largest}: {mismatches} mismatches; linearity {linear}/100"),
    )
}

fn model_gains(eta: f64, y0: f64, e_det: f64, pulses: &PulseConfig) -> Gains {
    let mut g = Gains { gain: [0.0; 3], error_gain: [0.0; 3] };
    for c in IntensityClass::ALL {
        let x = pulses.intensity(c);
        g.gain[c.index()] = gain_for_eta(eta, y0, x);
        g.error_gain[c.index()] = error_gain_for_eta(eta, y0, e_det, x);
    }
    g
}

fn worked_pulses() -> PulseConfig {
    PulseConfig { mu: 0.5, nu1: 0.1, nu2: 0.005, ..PulseConfig::default() }
}

fn worked_estimates() -> DecoyEstimates {
    let pulses = worked_pulses();
    estimate(&model_gains(0.01, 0.0, 0.01, &pulses), &pulses, VacuumYield::DecoyBound).unwrap()
}

fn decoy_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    for _ in 0..50 {
        let eta = 10f64.powf(rng.random_range(-4.0..-0.5));
        let y0 = rng.random_range(0.0..1e-4);
        let e_det = rng.random_range(0.0..0.05);
        let mu = rng.random_range(0.2..1.0);
        let nu1 = rng.random_range(0.05..0.5) * mu;
        let nu2 = rng.random_range(0.0..0.5) * nu1;
        let pulses = PulseConfig { mu, nu1, nu2, ..PulseConfig::default() };
        let est = estimate(&model_gains(eta, y0, e_det, &pulses), &pulses, VacuumYield::DecoyBound)
            .map_err(|e| format!("channel eta {eta:e}: {e}"))?;
        let y1_true = y0 + (1.0 - y0) * eta;
        let e1_true = (0.5 * y0 + e_det * eta) / y1_true;
        if est.y1_l > y1_true + 1e-12 || est.e1_u < e1_true - 1e-12 {
            violations += 1;
        }
    }
    let w = worked_estimates();
    let (dy, de) = ((w.y1_l - WORKED_Y1_L).abs(), (w.e1_u - WORKED_E1_U).abs());
    check(
        violations == 0 && dy < 1e-5 && de < 1e-5,
        format!("{violations}/50 bound violations; worked example Y1_L {:.6e} (off {dy:.1e}), e1_U {:.6} (off {de:.1e})", w.y1_l, w.e1_u),
    )
}

fn smooth(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let w = &v[i.saturating_sub(1)..(i + 2).min(v.len())];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

fn unimodal(v: &[f64], tolerance: f64) -> bool {
    let peak = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    (1..=peak).all(|i| v[i] >= v[i - 1] - tolerance) && (peak + 1..v.len()).all(|i| v[i] <= v[i - 1] + tolerance)
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (intercept, slope, 1.0 - ss_res / ss_tot)
}

fn rate_curve_shape() -> Outcome {
    let sc = Scenario::fast();
    let capacity = sc.tasks.standalone_ec_kbps();
    let mut grid = vec![0.3];
    grid.extend((1..=18).map(f64::from));
    grid.push(20.0);
    let workers = std::thread::available_parallelism().map_or(1, usize::from);
    let points: Vec<SweepPoint> =
        sweep_with_workers(&sc, &grid, RunBudget::Frames(100), sc.seed, workers).map_err(|e| e.to_string())?;

    let corrected: Vec<f64> = points.iter().map(|p| p.corrected_kbps).collect();
    let smoothed = smooth(&corrected);
    let peak_smoothed = smoothed.iter().cloned().fold(0.0, f64::max);
    let shape_ok = unimodal(&smoothed, 0.03 * peak_smoothed);
    let best = points.iter().max_by(|a, b| a.corrected_kbps.total_cmp(&b.corrected_kbps)).unwrap();
    let peak_ok = (best.corrected_kbps / 33.488 - 1.0).abs() <= 0.2 && (best.raw_kbps / 69.720 - 1.0).abs() <= 0.2;

    let (below, above): (Vec<&SweepPoint>, Vec<&SweepPoint>) = points.iter().partition(|p| p.raw_kbps < 114.0);
    let xs: Vec<f64> = below.iter().map(|p| p.raw_kbps).collect();
    let ys: Vec<f64> = below.iter().map(|p| p.sifted_kbps).collect();
    let (a, b, r2) = linear_fit(&xs, &ys);
    let sublinear = !above.is_empty() && above.iter().all(|p| p.sifted_kbps <= 0.97 * (a + b * p.raw_kbps));

    check(
        (capacity - 53.213).abs() < 1e-9 && shape_ok && peak_ok && r2 > 0.99 && sublinear,
        format!(
            "EC capacity {capacity:.3} kbps; unimodal {shape_ok}; peak {:.2} kbps at raw {:.2} kbps (mu {}); \
             R^2 below 114 kbps {r2:.5}; {} points above, all >= 3% under the fit: {sublinear}",
            best.corrected_kbps,
            best.raw_kbps,
            best.mu,
            above.len()
        ),
    )
}

fn raw_rate_range(sc: &Scenario, lo: f64, hi: f64) -> Result<(f64, f64), String> {
    let workers = std::thread::available_parallelism().map_or(1, usize::from);
    let pts = sweep_with_workers(sc, &[lo, hi], RunBudget::Frames(20), sc.seed, workers).map_err(|e| e.to_string())?;
    Ok((pts[0].raw_kbps, pts[1].raw_kbps))
}

fn within_factor(got: f64, want: f64, factor: f64) -> bool {
    got >= want / factor && got <= want * factor
}

fn raw_rate_brackets() -> Outcome {
    let four = raw_rate_range(&Scenario::commercial(), 0.4, 7.0)?;
    let one = raw_rate_range(&Scenario::fast(), 0.3, 20.0)?;
    let ok = within_factor(four.0, 0.2, 3.0)
        && within_factor(four.1, 4.8, 3.0)
        && within_factor(one.0, 2.24, 3.0)
        && within_factor(one.1, 121.0, 3.0);
    check(
        ok,
        format!(
            "4 detectors {:.2}-{:.2} kbps (ref 0.2-4.8); 1 detector {:.2}-{:.2} kbps (ref 2.24-121)",
            four.0, four.1, one.0, one.1
        ),
    )
}

/// A tally with the counts of 15 hours at the commercial duty cycle,
/// detections and errors drawn around the model gains.
fn fifteen_hour_tally(sc: &Scenario) -> DecoyTally {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let eta = qkd_core::channel::overall_transmittance(&sc.channel, &sc.detectors).unwrap();
    let pulses_sent = 15.0 * 3600.0 * sc.clock.clock_rate_hz * 0.11;
    let mut t = DecoyTally::default();
    for c in IntensityClass::ALL {
        let i = c.index();
        let x = sc.pulses.intensity(c);
        t.sent[i] = (pulses_sent * sc.pulses.class_probabilities[i]).round() as u64;
        let p_detect = 0.5 * gain_for_eta(eta, sc.channel.y0, x);
        t.detected[i] = Binomial::new(t.sent[i], p_detect).unwrap().sample(&mut rng);
        let p_err = error_gain_for_eta(eta, sc.channel.y0, sc.channel.e_det, x) / gain_for_eta(eta, sc.channel.y0, x);
        t.errors[i] = Binomial::new(t.detected[i], p_err).unwrap().sample(&mut rng);
    }
    t
}

fn analysis_runtime() -> Outcome {
    let sc = Scenario::commercial();
    let tally = fifteen_hour_tally(&sc);
    let start = Instant::now();
    let mut csv = Vec::new();
    write_tally_csv(&mut csv, &tally).map_err(|e| e.to_string())?;
    let read = read_tally_csv(&csv[..]).map_err(|e| e.to_string())?;
    let a = analyze_tally(&read, &sc.pulses, &sc.pa.key_rate, sc.pa.vacuum).map_err(|e| e.to_string())?;
    let synthetic = start.elapsed();

    let m = run(&sc, RunBudget::Frames(20), 3).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut csv = Vec::new();
    write_tally_csv(&mut csv, &m.tally).map_err(|e| e.to_string())?;
    let simulated = analyze_tally(&read_tally_csv(&csv[..]).map_err(|e| e.to_string())?, &sc.pulses, &sc.pa.key_rate, sc.pa.vacuum);
    let sim_time = start.elapsed();
    let limit = Duration::from_secs(60);
    check(
        synthetic < limit && sim_time < limit && simulated.is_ok() && read == tally,
        format!(
            "15 h tally ({} signal pulses): {synthetic:.2?}, Y1_L {:.3e}, rate {:.3e}; simulated 20-frame tally: {sim_time:.2?}",
            tally.sent[0], a.estimates.y1_l, a.rate
        ),
    )
}

fn netrun_agreement() -> Outcome {
    let sc = Scenario::link();
    let frames = sc.sim.frames;
    let (a1, b1) = run_tcp_loopback(&sc, frames).map_err(|e| e.to_string())?;
    let (a2, b2) = run_tcp_loopback(&sc, frames).map_err(|e| e.to_string())?;
    let agree = a1.key == b1.key
        && a1.key_digest == b1.key_digest
        && a1.counters.disclosed_bits == b1.counters.disclosed_bits
        && !a1.key.is_empty();
    let repeat = a2.key == a1.key && b2.key == b1.key && a2.counters == a1.counters;
    let qber = a1.qber().unwrap_or(f64::NAN);
    check(
        agree && repeat,
        format!(
            "channel QBER {:.3}, measured {qber:.4}; {} key bits, digest {:016x}, disclosed {} bits on both sides; repeat identical: {repeat}",
            sc.channel.e_det,
            a1.key.len(),
            a1.key_digest,
            a1.counters.disclosed_bits
        ),
    )
}

fn secret_fraction_pipeline() -> Outcome {
    let est = worked_estimates();
    let params = KeyRateParams::default();
    let r = secret_fraction(&est, est.e_mu, est.q_mu, &params);
    let n = 1_000_000u64;
    let mut monotone = true;
    let mut prev = usize::MAX;
    for k in 0..=50 {
        let e1 = est.e1_u + 0.002 * k as f64;
        let len = final_key_length(n, &DecoyEstimates { e1_u: e1, ..est }, 10_000, 0);
        monotone &= len <= prev;
        prev = len;
    }
    prev = usize::MAX;
    for k in 0..=50 {
        let len = final_key_length(n, &est, 5_000 * k, 0);
        monotone &= len <= prev;
        prev = len;
    }
    let a = analyze_worked_fraction(&est, &params);
    check(
        (r - WORKED_RATE).abs() <= 2e-5 && monotone,
        format!(
            "R = {r:.6e} per pulse (oracle {WORKED_RATE:.6e}); length monotone: {monotone}; \
             secret bits per corrected bit {:.2}% (reported only)",
            100.0 * a
        ),
    )
}

fn analyze_worked_fraction(est: &DecoyEstimates, params: &KeyRateParams) -> f64 {
    let h = |p: f64| qkd_core::decoy::binary_entropy(p).unwrap();
    est.q1_l / est.q_mu * (1.0 - h(est.e1_u)) - params.f_ec * h(est.e_mu)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1  duty cycle", duty_cycle_budget),
        ("2  sifting ratio", sifting_ratio),
        ("3a LDPC toy code vs coset leaders", ldpc_toy_oracle),
        ("3b LDPC n=10^4 block success", ldpc_block_success),
        ("4  Toeplitz NTT equivalence", toeplitz_equivalence),
        ("5  decoy soundness", decoy_soundness),
        ("6  rate-curve shape", rate_curve_shape),
        ("7  raw-rate brackets", raw_rate_brackets),
        ("8  decoy analysis runtime", analysis_runtime),
        ("9  networked session agreement", netrun_agreement),
        ("10 secret-fraction pipeline", secret_fraction_pipeline),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {name} [{elapsed:.1?}]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{elapsed:.1?}]: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 && std::env::var("QKD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
