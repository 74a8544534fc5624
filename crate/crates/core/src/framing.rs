//! Quantum frames and the per-frame stage budget.
//!
//! A frame cycle runs: bit/basis generation (a), transfer to the I/O card (b),
//! classical control header (c), deadtime (d), qubit transmission (e),
//! deadtime (f), processing/idle (g) and, when required, polarisation
//! compensation (h).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{IntensityClass, PulseConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Qubit {
    pub bit: u8,
    pub basis: u8,
    pub class: IntensityClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumFrame {
    pub frame_number: u32,
    pub sender_addr: u8,
    pub receiver_addr: u8,
    pub pol_control_flag: bool,
    pub intensities: PulseConfig,
    pub qubits: Vec<Qubit>,
}

impl QuantumFrame {
    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockConfig {
    pub clock_rate_hz: f64,
    pub frame_qubits: usize,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig { clock_rate_hz: 1e8, frame_qubits: 10_000_000 }
    }
}

impl ClockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clock_rate_hz > 0.0 && self.clock_rate_hz.is_finite()) {
            return Err(Error::param("clock_rate_hz", "must be positive"));
        }
        Ok(())
    }

    /// Duration of stage e in milliseconds.
    pub fn transmission_ms(&self) -> f64 {
        self.frame_qubits as f64 / self.clock_rate_hz * 1e3
    }
}

/// Builds a frame whose bits and bases are i.i.d. fair coins and whose
/// intensity classes follow the configured mixture.
pub fn build_frame(frame_number: u32, clock: &ClockConfig, pulses: &PulseConfig, seed: u64) -> QuantumFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [p_signal, p_decoy1, _] = pulses.class_probabilities;
    let mut qubits = Vec::with_capacity(clock.frame_qubits);
    let mut word = 0u64;
    for i in 0..clock.frame_qubits {
        if i % 32 == 0 {
            word = rng.random();
        }
        let bit = (word & 1) as u8;
        let basis = ((word >> 1) & 1) as u8;
        word >>= 2;
        let u: f64 = rng.random();
        let class = if u < p_signal {
            IntensityClass::Signal
        } else if u < p_signal + p_decoy1 {
            IntensityClass::Decoy1
        } else {
            IntensityClass::Decoy2
        };
        qubits.push(Qubit { bit, basis, class });
    }
    QuantumFrame {
        frame_number,
        sender_addr: 0x01,
        receiver_addr: 0x02,
        pol_control_flag: false,
        intensities: pulses.clone(),
        qubits,
    }
}

/// Fixed stage durations (ms) other than e, which follows from the clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageDefaults {
    pub generation_ms: f64,
    pub transfer_ms: f64,
    pub header_ms: f64,
    pub deadtime_before_ms: f64,
    pub deadtime_after_ms: f64,
    pub pol_comp_average_ms: f64,
}

impl Default for StageDefaults {
    fn default() -> Self {
        StageDefaults {
            generation_ms: 225.0,
            transfer_ms: 225.0,
            header_ms: 960e-6,
            deadtime_before_ms: 50.0,
            deadtime_after_ms: 50.0,
            pol_comp_average_ms: 140.0,
        }
    }
}

impl StageDefaults {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("generation_ms", self.generation_ms),
            ("transfer_ms", self.transfer_ms),
            ("header_ms", self.header_ms),
            ("deadtime_before_ms", self.deadtime_before_ms),
            ("deadtime_after_ms", self.deadtime_after_ms),
            ("pol_comp_average_ms", self.pol_comp_average_ms),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "stage durations must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelineBudget {
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub t_d: f64,
    pub t_e: f64,
    pub t_f: f64,
    pub t_g: f64,
    pub t_h: f64,
    pub total: f64,
}

impl TimelineBudget {
    pub fn from_stages(stages: [f64; 8]) -> Self {
        let [t_a, t_b, t_c, t_d, t_e, t_f, t_g, t_h] = stages;
        TimelineBudget { t_a, t_b, t_c, t_d, t_e, t_f, t_g, t_h, total: stages.iter().sum() }
    }
}

pub fn timeline(clock: &ClockConfig, stages: &StageDefaults, g_ms: f64, include_pol: bool) -> Result<TimelineBudget> {
    if !(g_ms >= 0.0) {
        return Err(Error::param("g_ms", "must be non-negative"));
    }
    Ok(TimelineBudget::from_stages([
        stages.generation_ms,
        stages.transfer_ms,
        stages.header_ms,
        stages.deadtime_before_ms,
        clock.transmission_ms(),
        stages.deadtime_after_ms,
        g_ms,
        if include_pol { stages.pol_comp_average_ms } else { 0.0 },
    ]))
}

/// Fraction of the frame cycle spent transmitting qubits.
pub fn duty_cycle(budget: &TimelineBudget) -> Result<f64> {
    if budget.total <= 0.0 {
        return Err(Error::InvalidBudget);
    }
    Ok(budget.t_e / budget.total)
}
