//! Prints the corrected-rate curve of a preset over a list of intensities.
//!
//! usage: rate_curve [fast|commercial] [frames] [mu,mu,...]

use qkd_core::config::{Preset, Scenario};
use qkd_core::sim::{duty_report, pulses_at, run_with_code, scenario_code, RunBudget};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let preset = args.get(1).and_then(|s| Preset::parse(s)).unwrap_or(Preset::Fast);
    let frames: usize = args.get(2).map_or(60, |s| s.parse().unwrap());
    let mus: Vec<f64> = args.get(3).map_or_else(
        || vec![0.3, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0],
        |s| s.split(',').map(|m| m.parse().unwrap()).collect(),
    );
    let base = Scenario::from_preset(preset);
    let code = scenario_code(&base).unwrap();
    println!("mu\traw\tsifted\tcorr\tsecret\tduty\tqber\tg_ms\th_ms\tfail/blocks\twall");
    for mu in mus {
        let mut sc = base.clone();
        sc.pulses = pulses_at(&base.pulses, mu);
        let t = std::time::Instant::now();
        let m = run_with_code(&sc, &code, RunBudget::Frames(frames), 1).unwrap();
        println!(
            "{mu}\t{:.2}\t{:.2}\t{:.2}\t{:.3}\t{:.4}\t{:.4}\t{:.1}\t{:.1}\t{}/{}\t{:.1?}",
            m.raw_kbps(),
            m.sifted_kbps(),
            m.corrected_kbps(),
            m.secret_kbps(),
            duty_report(&m),
            m.qber().unwrap_or(f64::NAN),
            m.mean_wait_ms(),
            m.mean_compensation_ms(),
            m.blocks_failed,
            m.blocks_attempted,
            t.elapsed()
        );
    }
}
