//! Weak-coherent-pulse source, lossy channel and gated detector model.
//!
//! The analytic side (`expected_gain`, `expected_error_gain`) uses the usual
//! yield model `Q_x = Y0 + (1 - Y0)(1 - exp(-eta x))`. The Monte Carlo side
//! (`simulate_frame`) samples photon numbers, losses, basis choices and dark
//! counts pulse by pulse, and agrees with the analytic model in distribution.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::framing::QuantumFrame;

/// Error probability of a dark count (random outcome).
pub const DARK_COUNT_ERROR: f64 = 0.5;

/// Number of receiver output ports: two bases times two bit values.
pub const RECEIVER_PORTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntensityClass {
    Signal,
    Decoy1,
    Decoy2,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 3] =
        [IntensityClass::Signal, IntensityClass::Decoy1, IntensityClass::Decoy2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            IntensityClass::Signal => "mu",
            IntensityClass::Decoy1 => "nu1",
            IntensityClass::Decoy2 => "nu2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mu" | "signal" => Some(IntensityClass::Signal),
            "nu1" | "decoy1" => Some(IntensityClass::Decoy1),
            "nu2" | "decoy2" => Some(IntensityClass::Decoy2),
            _ => None,
        }
    }
}

/// Source intensities and the per-pulse class mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseConfig {
    pub mu: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// Emission probabilities for signal, decoy 1 and decoy 2.
    pub class_probabilities: [f64; 3],
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig::with_fixed_ratios(0.5)
    }
}

impl PulseConfig {
    pub const DEFAULT_CLASS_PROBABILITIES: [f64; 3] = [0.875, 0.0625, 0.0625];

    /// Decoys tied to the signal as nu1 = 0.2 mu and nu2 = 0.01 mu.
    pub fn with_fixed_ratios(mu: f64) -> Self {
        PulseConfig {
            mu,
            nu1: 0.2 * mu,
            nu2: 0.01 * mu,
            class_probabilities: Self::DEFAULT_CLASS_PROBABILITIES,
        }
    }

    pub fn intensity(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.mu,
            IntensityClass::Decoy1 => self.nu1,
            IntensityClass::Decoy2 => self.nu2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::param("mu", "must be positive and finite"));
        }
        if !(self.nu2 >= 0.0) {
            return Err(Error::param("nu2", "must be non-negative"));
        }
        if !(self.nu2 < self.nu1) {
            return Err(Error::param("nu1", "must exceed nu2"));
        }
        if !(self.nu1 < self.mu) {
            return Err(Error::param("nu1", "must be below mu"));
        }
        if !(self.nu1 + self.nu2 < self.mu) {
            return Err(Error::param("nu1", "nu1 + nu2 must be below mu"));
        }
        let p = self.class_probabilities;
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::param("class_probabilities", "each must lie in [0, 1]"));
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::param("class_probabilities", "must sum to 1"));
        }
        Ok(())
    }
}

/// Reflected random walk on the polarisation-drift QBER offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftParams {
    /// Standard deviation of the offset after one second of drift.
    pub step_sigma: f64,
    pub reset_value: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        DriftParams { step_sigma: 0.0, reset_value: 0.0 }
    }
}

impl DriftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_sigma >= 0.0 && self.step_sigma.is_finite()) {
            return Err(Error::param("step_sigma", "must be non-negative"));
        }
        if !(0.0..=0.5).contains(&self.reset_value) {
            return Err(Error::param("reset_value", "must lie in [0, 0.5]"));
        }
        Ok(())
    }

    /// Advances the offset by `dt_s` seconds of drift, reflecting at 0 and 0.5.
    pub fn advance<R: Rng + ?Sized>(&self, offset: f64, dt_s: f64, rng: &mut R) -> f64 {
        if self.step_sigma == 0.0 || dt_s <= 0.0 {
            return offset;
        }
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        reflect(offset + self.step_sigma * dt_s.sqrt() * z)
    }
}

fn reflect(mut x: f64) -> f64 {
    // fold onto [0, 0.5]; period 1.0
    x = x.rem_euclid(1.0);
    if x > 0.5 {
        x = 1.0 - x;
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub loss_db: f64,
    pub receiver_loss_db: f64,
    /// Total dark-count yield per gate, over all detectors.
    pub y0: f64,
    /// Error probability of dark counts. Always [`DARK_COUNT_ERROR`].
    pub e0: f64,
    /// Baseline optical error (misalignment) probability.
    pub e_det: f64,
    pub drift: DriftParams,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            loss_db: 6.5,
            receiver_loss_db: 3.5,
            y0: 4e-5,
            e0: DARK_COUNT_ERROR,
            e_det: 0.01,
            drift: DriftParams::default(),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        transmittance_from_db(self.loss_db)?;
        if !(self.receiver_loss_db >= 0.0) {
            return Err(Error::param("receiver_loss_db", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.y0) {
            return Err(Error::param("y0", "must lie in [0, 1)"));
        }
        if self.e0 != DARK_COUNT_ERROR {
            return Err(Error::param("e0", "dark-count error rate is fixed at 0.5"));
        }
        if !(0.0..0.5).contains(&self.e_det) {
            return Err(Error::param("e_det", "must lie in [0, 0.5)"));
        }
        self.drift.validate()
    }

    /// Optical error probability including the current drift offset.
    pub fn effective_error(&self, drift_qber: f64) -> f64 {
        (self.e_det + drift_qber).clamp(0.0, 0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub gate_rate_hz: f64,
    /// 4 (one per receiver port) or 1 (a single instrumented port).
    pub detector_count: usize,
    pub dark_prob_per_gate: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            efficiency: 0.1,
            gate_rate_hz: 1e6,
            detector_count: 4,
            dark_prob_per_gate: 1e-5,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self, clock_rate_hz: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::param("efficiency", "must lie in [0, 1]"));
        }
        if self.detector_count != 1 && self.detector_count != RECEIVER_PORTS {
            return Err(Error::param("detector_count", "must be 1 or 4"));
        }
        if !(self.gate_rate_hz > 0.0 && self.gate_rate_hz <= clock_rate_hz) {
            return Err(Error::param("gate_rate_hz", "must be positive and at most the clock rate"));
        }
        if !(0.0..1.0).contains(&self.dark_prob_per_gate) {
            return Err(Error::param("dark_prob_per_gate", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Dark yield per gate of the whole detector bank.
    pub fn dark_yield(&self) -> f64 {
        1.0 - (1.0 - self.dark_prob_per_gate).powi(self.detector_count as i32)
    }

    /// Number of source pulses per detector gate.
    pub fn gate_stride(&self, clock_rate_hz: f64) -> usize {
        ((clock_rate_hz / self.gate_rate_hz).round() as usize).max(1)
    }
}

pub fn transmittance_from_db(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) || loss_db.is_infinite() {
        return Err(Error::param("loss_db", "must be non-negative and finite"));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Poisson probability of two or more photons in a pulse of mean `mu`.
pub fn multi_photon_fraction(mu: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::param("mu", "must be non-negative"));
    }
    // -expm1 keeps precision for small mu
    Ok((-(-mu).exp_m1() - mu * (-mu).exp()).clamp(0.0, 1.0))
}

/// Overall transmittance eta: channel, receiver loss, detector efficiency and
/// the fraction of receiver ports that are instrumented.
pub fn overall_transmittance(channel: &ChannelParams, detectors: &DetectorParams) -> Result<f64> {
    Ok(photon_survival(channel, detectors)?
        * detectors.detector_count as f64
        / RECEIVER_PORTS as f64)
}

fn photon_survival(channel: &ChannelParams, detectors: &DetectorParams) -> Result<f64> {
    Ok(transmittance_from_db(channel.loss_db)?
        * transmittance_from_db(channel.receiver_loss_db)?
        * detectors.efficiency)
}

pub fn gain_for_eta(eta: f64, y0: f64, x: f64) -> f64 {
    y0 + (1.0 - y0) * -(-eta * x).exp_m1()
}

pub fn error_gain_for_eta(eta: f64, y0: f64, e_det: f64, x: f64) -> f64 {
    DARK_COUNT_ERROR * y0 + e_det * -(-eta * x).exp_m1()
}

pub fn expected_gain(channel: &ChannelParams, detectors: &DetectorParams, intensity: f64) -> Result<f64> {
    if !(intensity >= 0.0) {
        return Err(Error::param("intensity", "must be non-negative"));
    }
    let eta = overall_transmittance(channel, detectors)?;
    Ok(gain_for_eta(eta, channel.y0, intensity))
}

/// `E_x * Q_x`, the probability per gated pulse of an erroneous detection.
pub fn expected_error_gain(
    channel: &ChannelParams,
    detectors: &DetectorParams,
    intensity: f64,
) -> Result<f64> {
    if !(intensity >= 0.0) {
        return Err(Error::param("intensity", "must be non-negative"));
    }
    let eta = overall_transmittance(channel, detectors)?;
    Ok(error_gain_for_eta(eta, channel.y0, channel.e_det, intensity))
}

pub fn expected_qber(channel: &ChannelParams, detectors: &DetectorParams, intensity: f64) -> Result<f64> {
    let q = expected_gain(channel, detectors, intensity)?;
    if q <= 0.0 {
        return Err(Error::UndefinedQber);
    }
    Ok(expected_error_gain(channel, detectors, intensity)? / q)
}

/// Detection of one detector in one gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionEvent {
    pub pulse_index: u32,
    pub detector_id: u8,
    pub bob_basis: u8,
    pub bob_bit: u8,
    pub is_coincidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub clock_rate_hz: f64,
    /// Test hook: Bob measures every photon in Alice's basis.
    pub force_matched_basis: bool,
}

impl SimulationOptions {
    pub fn new(clock_rate_hz: f64) -> Self {
        SimulationOptions { clock_rate_hz, force_matched_basis: false }
    }
}

/// Maps receiver port (basis, bit) to detector id, if that port is instrumented.
fn port_detector(port: usize, detector_count: usize) -> Option<u8> {
    if detector_count == RECEIVER_PORTS {
        Some(port as u8)
    } else if port == 0 {
        Some(0)
    } else {
        None
    }
}

fn detector_port(detector_id: u8, detector_count: usize) -> usize {
    if detector_count == RECEIVER_PORTS {
        detector_id as usize
    } else {
        0
    }
}

/// Monte Carlo transmission and detection of one quantum frame.
///
/// Only every `clock / gate_rate`-th pulse falls into a detector gate. Each
/// photon independently survives with the physical transmittance, picks a
/// measurement basis with a fair coin and, in the matching basis, lands on
/// the wrong bit port with the drift-adjusted optical error probability.
/// Dark counts fire independently per detector. Events are sorted by pulse
/// index, then detector id.
pub fn simulate_frame(
    frame: &QuantumFrame,
    channel: &ChannelParams,
    detectors: &DetectorParams,
    options: SimulationOptions,
    seed: u64,
    drift_qber: f64,
) -> Result<Vec<DetectionEvent>> {
    if !(0.0..=0.5).contains(&drift_qber) {
        return Err(Error::param("drift_qber", "must lie in [0, 0.5]"));
    }
    channel.validate()?;
    detectors.validate(options.clock_rate_hz)?;

    let survival = photon_survival(channel, detectors)?;
    let error = channel.effective_error(drift_qber);
    let k = detectors.detector_count;
    let dark = 1.0 - (1.0 - channel.y0).powf(1.0 / k as f64);
    let stride = detectors.gate_stride(options.clock_rate_hz);
    let photon_dists: Vec<Option<Poisson<f64>>> = IntensityClass::ALL
        .iter()
        .map(|&c| {
            let x = frame.intensities.intensity(c);
            (x > 0.0).then(|| Poisson::new(x).expect("positive mean"))
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut fired = [false; RECEIVER_PORTS];

    for (index, qubit) in frame.qubits.iter().enumerate().step_by(stride) {
        fired[..k].iter_mut().for_each(|f| *f = false);

        if let Some(dist) = &photon_dists[qubit.class.index()] {
            let photons = dist.sample(&mut rng) as u64;
            for _ in 0..photons {
                if !rng.random_bool(survival) {
                    continue;
                }
                let basis = if options.force_matched_basis {
                    qubit.basis
                } else {
                    rng.random::<bool>() as u8
                };
                let bit = if basis == qubit.basis {
                    qubit.bit ^ (rng.random::<f64>() < error) as u8
                } else {
                    rng.random::<bool>() as u8
                };
                if let Some(d) = port_detector(2 * basis as usize + bit as usize, k) {
                    fired[d as usize] = true;
                }
            }
        }
        if dark > 0.0 {
            for f in fired[..k].iter_mut() {
                if rng.random::<f64>() < dark {
                    *f = true;
                }
            }
        }

        let clicks = fired[..k].iter().filter(|&&f| f).count();
        for (d, _) in fired[..k].iter().enumerate().filter(|(_, &f)| f) {
            let port = detector_port(d as u8, k);
            events.push(DetectionEvent {
                pulse_index: index as u32,
                detector_id: d as u8,
                bob_basis: (port / 2) as u8,
                bob_bit: (port % 2) as u8,
                is_coincidence: clicks > 1,
            });
        }
    }
    Ok(events)
}
