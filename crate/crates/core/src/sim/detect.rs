use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::bits::mix_seed;
use crate::channel::{
    error_gain_for_eta, gain_for_eta, overall_transmittance, simulate_frame, IntensityClass, SimulationOptions,
};
use crate::config::Scenario;
use crate::error::Result;
use crate::framing::build_frame;
use crate::sifting::{collapse_coincidences, sift, DetectionReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectionMode {
    /// Per-class detection and sifting counts drawn from the closed-form
    /// gains; per-bit errors drawn from the closed-form error rates.
    #[default]
    Counts,
    /// Pulse-by-pulse Monte Carlo of the whole frame followed by sifting.
    Pulse,
}

/// Everything one frame produces for the post-processing tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub frame_number: u32,
    /// Detection-report entries (raw key bits).
    pub raw_bits: u64,
    /// Gated pulses per class.
    pub sent: [u64; 3],
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
    pub classes: Vec<IntensityClass>,
}

pub fn detect(scenario: &Scenario, frame_number: u32, drift_qber: f64, seed: u64) -> Result<FrameData> {
    match scenario.sim.detection {
        DetectionMode::Counts => detect_counts(scenario, frame_number, drift_qber, seed),
        DetectionMode::Pulse => detect_pulses(scenario, frame_number, drift_qber, seed),
    }
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

fn detect_counts(scenario: &Scenario, frame_number: u32, drift_qber: f64, seed: u64) -> Result<FrameData> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, frame_number as u64));
    let eta = overall_transmittance(&scenario.channel, &scenario.detectors)?;
    let y0 = scenario.channel.y0;
    let e_opt = scenario.channel.effective_error(drift_qber);
    let stride = scenario.detectors.gate_stride(scenario.clock.clock_rate_hz);
    let gated = scenario.clock.frame_qubits.div_ceil(stride) as u64;

    let p = scenario.pulses.class_probabilities;
    let mut sent = [0u64; 3];
    let mut left = gated;
    let mut mass = 1.0;
    for i in 0..3 {
        sent[i] = if i == 2 { left } else { binomial(&mut rng, left, (p[i] / mass).min(1.0)) };
        left -= sent[i];
        mass -= p[i];
    }

    let mut raw_bits = 0;
    let mut classes = Vec::new();
    let mut error_rate = [0.0; 3];
    for (i, class) in IntensityClass::ALL.into_iter().enumerate() {
        let x = scenario.pulses.intensity(class);
        let q = gain_for_eta(eta, y0, x);
        let detected = binomial(&mut rng, sent[i], q);
        raw_bits += detected;
        let kept = binomial(&mut rng, detected, 0.5);
        classes.extend(std::iter::repeat_n(class, kept as usize));
        error_rate[i] = if q > 0.0 { error_gain_for_eta(eta, y0, e_opt, x) / q } else { 0.0 };
    }
    classes.shuffle(&mut rng);

    let mut alice = Vec::with_capacity(classes.len());
    let mut bob = Vec::with_capacity(classes.len());
    for c in &classes {
        let a = rng.random::<bool>() as u8;
        alice.push(a);
        bob.push(a ^ rng.random_bool(error_rate[c.index()]) as u8);
    }
    Ok(FrameData { frame_number, raw_bits, sent, alice, bob, classes })
}

fn detect_pulses(scenario: &Scenario, frame_number: u32, drift_qber: f64, seed: u64) -> Result<FrameData> {
    let base = mix_seed(seed, frame_number as u64);
    let frame = build_frame(frame_number, &scenario.clock, &scenario.pulses, mix_seed(base, 1));
    let options = SimulationOptions::new(scenario.clock.clock_rate_hz);
    let events = simulate_frame(&frame, &scenario.channel, &scenario.detectors, options, mix_seed(base, 2), drift_qber)?;
    let events = collapse_coincidences(&events, mix_seed(base, 3));
    let (report, bob_bits) = DetectionReport::from_events(frame_number, &events);
    let outcome = sift(&frame, &report, &bob_bits)?;

    let stride = scenario.detectors.gate_stride(scenario.clock.clock_rate_hz);
    let mut sent = [0u64; 3];
    for q in frame.qubits.iter().step_by(stride) {
        sent[q.class.index()] += 1;
    }
    Ok(FrameData {
        frame_number,
        raw_bits: report.len() as u64,
        sent,
        alice: outcome.alice.bits,
        bob: outcome.bob.bits,
        classes: outcome.alice.classes,
    })
}
