//! Discrete-event model of the whole pipeline: Alice's frame loop, the
//! post-processing tasks that share each host's CPU, and drift-triggered
//! polarisation compensation.

mod detect;
mod engine;

pub use detect::{DetectionMode, FrameData};

use crate::channel::PulseConfig;
use crate::config::Scenario;
use crate::decoy::{analyze_tally, TallyAnalysis};
use crate::error::{Error, Result};
use crate::ldpc::{generate_code, LdpcCode};
use crate::privacy::final_key_length;
use crate::sifting::DecoyTally;

/// Bits of the per-block verification digest, disclosed alongside the syndrome.
pub const VERIFY_BITS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    FrameGeneration,
    DataTransfer,
    Header,
    Deadtime,
    QubitTransmission,
    Sifting,
    ErrorCorrection,
    Logging,
    PolarisationCompensation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationModel {
    FixedMs(f64),
    /// `fixed_ms + per_kbit_ms * kbits` of CPU work.
    PerKbit { fixed_ms: f64, per_kbit_ms: f64 },
    /// Occupies the hardware for a fixed time without using the CPU.
    Hardware(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub duration: DurationModel,
}

impl TaskSpec {
    pub fn uses_cpu(&self) -> bool {
        !matches!(self.duration, DurationModel::Hardware(_))
    }

    /// Work (CPU tasks) or occupancy (hardware tasks) in milliseconds for `bits` of input.
    pub fn cost_ms(&self, bits: u64) -> f64 {
        match self.duration {
            DurationModel::FixedMs(ms) | DurationModel::Hardware(ms) => ms,
            DurationModel::PerKbit { fixed_ms, per_kbit_ms } => fixed_ms + per_kbit_ms * bits as f64 / 1000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.duration {
            DurationModel::FixedMs(ms) | DurationModel::Hardware(ms) => ms >= 0.0 && ms.is_finite(),
            DurationModel::PerKbit { fixed_ms, per_kbit_ms } => {
                fixed_ms >= 0.0 && per_kbit_ms >= 0.0 && fixed_ms.is_finite() && per_kbit_ms.is_finite()
            }
        };
        let hardware = matches!(
            self.kind,
            TaskKind::Header | TaskKind::Deadtime | TaskKind::QubitTransmission | TaskKind::PolarisationCompensation
        );
        if !ok {
            return Err(Error::param("task duration", "must be finite and non-negative"));
        }
        if hardware == self.uses_cpu() {
            return Err(Error::param("task duration", "hardware stages block without CPU; others use CPU"));
        }
        Ok(())
    }
}

/// CPU task costs on both hosts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskCosts {
    /// Alice's per-frame handling of the detection report (mask construction).
    pub alice_frame_ms: f64,
    pub alice_ms_per_kbit: f64,
    /// Per-frame logging on each host.
    pub log_ms: f64,
    /// Bob's sifting work per kbit of raw key.
    pub sift_ms_per_kbit: f64,
    /// Error-correction work per kbit of sifted key.
    pub ec_ms_per_kbit: f64,
}

impl Default for TaskCosts {
    fn default() -> Self {
        TaskCosts {
            alice_frame_ms: 35.0,
            alice_ms_per_kbit: 0.675,
            log_ms: 20.0,
            sift_ms_per_kbit: 4.4,
            ec_ms_per_kbit: 1000.0 / 53.213,
        }
    }
}

impl TaskCosts {
    /// Sifted-key throughput of the error-correction task alone, in kbps.
    pub fn standalone_ec_kbps(&self) -> f64 {
        if self.ec_ms_per_kbit == 0.0 {
            f64::INFINITY
        } else {
            1000.0 / self.ec_ms_per_kbit
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alice_frame_ms", self.alice_frame_ms),
            ("alice_ms_per_kbit", self.alice_ms_per_kbit),
            ("log_ms", self.log_ms),
            ("sift_ms_per_kbit", self.sift_ms_per_kbit),
            ("ec_ms_per_kbit", self.ec_ms_per_kbit),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchedulingPolicy {
    /// Equal instantaneous rate for every process with pending work.
    #[default]
    FairShare,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpuModel {
    /// Task-milliseconds of work per wall-clock millisecond; may be infinite.
    pub alice_capacity: f64,
    pub bob_capacity: f64,
    pub policy: SchedulingPolicy,
}

impl Default for CpuModel {
    fn default() -> Self {
        CpuModel { alice_capacity: 1.0, bob_capacity: 1.0, policy: SchedulingPolicy::FairShare }
    }
}

impl CpuModel {
    pub fn unlimited() -> Self {
        CpuModel { alice_capacity: f64::INFINITY, bob_capacity: f64::INFINITY, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alice_capacity > 0.0) {
            return Err(Error::param("alice_capacity", "must be positive"));
        }
        if !(self.bob_capacity > 0.0) {
            return Err(Error::param("bob_capacity", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub qber_threshold: f64,
    /// Frame-loop blocking time of one compensation.
    pub comp_duration_ms: f64,
    pub powermeter_rate_hz: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams { qber_threshold: 0.035, comp_duration_ms: 3000.0, powermeter_rate_hz: 1.0 }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.qber_threshold > 0.0 && self.qber_threshold < 0.5) {
            return Err(Error::param("qber_threshold", "must lie in (0, 0.5)"));
        }
        if !(self.powermeter_rate_hz > 0.0) {
            return Err(Error::param("powermeter_rate_hz", "must be positive"));
        }
        if !(self.comp_duration_ms >= 1000.0 / self.powermeter_rate_hz) || !self.comp_duration_ms.is_finite() {
            return Err(Error::param("comp_duration_ms", "must cover at least one powermeter reading"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunBudget {
    Frames(usize),
    DurationMs(f64),
}

/// Cumulative counters at one sampling instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time_ms: f64,
    pub frames: u64,
    pub raw_bits: u64,
    pub sifted_bits: u64,
    pub corrected_bits: u64,
    /// Raw bits of frames waiting for or in sifting.
    pub sift_queue_bits: u64,
    /// Sifted bits buffered for, or being processed by, error correction.
    pub ec_queue_bits: u64,
    pub compensations: u64,
    pub drift_qber: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineMetrics {
    pub samples: Vec<Sample>,
    pub total_time_ms: f64,
    pub transmission_time_ms: f64,
    pub frames_sent: u64,
    pub raw_bits: u64,
    pub sifted_bits: u64,
    pub corrected_bits: u64,
    pub blocks_attempted: u64,
    pub blocks_failed: u64,
    pub compensation_events: u64,
    pub compensation_time_ms: f64,
    /// Sum of the per-frame idle/processing waits (stage g).
    pub wait_time_ms: f64,
    /// Errors found in, and size of, successfully corrected blocks.
    pub corrected_errors: u64,
    /// Decoy counts: sent and sifted per class, errors extrapolated from corrected blocks.
    pub tally: DecoyTally,
    pub corrected_signal_bits: u64,
    pub leakage_bits: u64,
    pub analysis: Option<TallyAnalysis>,
    pub secret_bits: u64,
}

impl PipelineMetrics {
    fn kbps(&self, bits: u64) -> f64 {
        if self.total_time_ms > 0.0 {
            bits as f64 / self.total_time_ms
        } else {
            0.0
        }
    }

    pub fn raw_kbps(&self) -> f64 {
        self.kbps(self.raw_bits)
    }

    pub fn sifted_kbps(&self) -> f64 {
        self.kbps(self.sifted_bits)
    }

    pub fn corrected_kbps(&self) -> f64 {
        self.kbps(self.corrected_bits)
    }

    pub fn secret_kbps(&self) -> f64 {
        self.kbps(self.secret_bits)
    }

    /// QBER measured over the successfully corrected blocks.
    pub fn qber(&self) -> Option<f64> {
        (self.corrected_bits > 0).then(|| self.corrected_errors as f64 / self.corrected_bits as f64)
    }

    pub fn mean_wait_ms(&self) -> f64 {
        if self.frames_sent == 0 {
            0.0
        } else {
            self.wait_time_ms / self.frames_sent as f64
        }
    }

    pub fn mean_compensation_ms(&self) -> f64 {
        if self.frames_sent == 0 {
            0.0
        } else {
            self.compensation_time_ms / self.frames_sent as f64
        }
    }
}

/// Fraction of wall-clock time spent transmitting qubits.
pub fn duty_report(metrics: &PipelineMetrics) -> f64 {
    if metrics.total_time_ms > 0.0 {
        metrics.transmission_time_ms / metrics.total_time_ms
    } else {
        0.0
    }
}

/// Builds the reconciliation code configured by the scenario.
pub fn scenario_code(scenario: &Scenario) -> Result<LdpcCode> {
    let l = &scenario.ldpc;
    generate_code(l.block_size, l.target_qber, l.efficiency, l.code_seed)
}

pub fn run(scenario: &Scenario, budget: RunBudget, seed: u64) -> Result<PipelineMetrics> {
    let code = scenario_code(scenario)?;
    run_with_code(scenario, &code, budget, seed)
}

/// [`run`] with a prebuilt code, which must match the scenario's block size.
pub fn run_with_code(scenario: &Scenario, code: &LdpcCode, budget: RunBudget, seed: u64) -> Result<PipelineMetrics> {
    scenario.validate()?;
    if code.n() != scenario.ldpc.block_size {
        return Err(Error::InvalidBlock { expected: scenario.ldpc.block_size, got: code.n() });
    }
    match budget {
        RunBudget::Frames(_) => {}
        RunBudget::DurationMs(ms) if ms >= 0.0 && ms.is_finite() => {}
        RunBudget::DurationMs(_) => return Err(Error::param("duration", "must be finite and non-negative")),
    }
    let mut metrics = engine::Engine::new(scenario, code, budget, seed).run();
    finish_key(scenario, code, &mut metrics);
    Ok(metrics)
}

fn finish_key(scenario: &Scenario, code: &LdpcCode, metrics: &mut PipelineMetrics) {
    metrics.leakage_bits = metrics.blocks_succeeded() * (code.m() as u64 + VERIFY_BITS);
    metrics.analysis = if metrics.corrected_bits > 0 {
        analyze_tally(&metrics.tally, &scenario.pulses, &scenario.pa.key_rate, scenario.pa.vacuum).ok()
    } else {
        None
    };
    metrics.secret_bits = match &metrics.analysis {
        Some(a) => final_key_length(
            metrics.corrected_signal_bits,
            &a.estimates,
            metrics.leakage_bits,
            scenario.pa.margin_bits,
        ) as u64,
        None => 0,
    };
}

impl PipelineMetrics {
    pub fn blocks_succeeded(&self) -> u64 {
        self.blocks_attempted - self.blocks_failed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub mu: f64,
    pub raw_kbps: f64,
    pub sifted_kbps: f64,
    pub corrected_kbps: f64,
    pub secret_kbps: f64,
    pub duty: f64,
    pub qber: Option<f64>,
}

impl SweepPoint {
    pub fn from_metrics(mu: f64, m: &PipelineMetrics) -> Self {
        SweepPoint {
            mu,
            raw_kbps: m.raw_kbps(),
            sifted_kbps: m.sifted_kbps(),
            corrected_kbps: m.corrected_kbps(),
            secret_kbps: m.secret_kbps(),
            duty: duty_report(m),
            qber: m.qber(),
        }
    }
}

/// The scenario's pulse configuration moved to signal intensity `mu`,
/// keeping the decoy-to-signal ratios and class mixture.
pub fn pulses_at(pulses: &PulseConfig, mu: f64) -> PulseConfig {
    let scale = mu / pulses.mu;
    PulseConfig { mu, nu1: pulses.nu1 * scale, nu2: pulses.nu2 * scale, ..pulses.clone() }
}

/// One run per signal intensity, in order, all with the same seed.
pub fn sweep(scenario: &Scenario, mu_values: &[f64], budget: RunBudget, seed: u64) -> Result<Vec<SweepPoint>> {
    sweep_with_workers(scenario, mu_values, budget, seed, 1)
}

/// [`sweep`] spread over `workers` threads. Points come back in input order
/// and are identical to the sequential result.
pub fn sweep_with_workers(
    scenario: &Scenario,
    mu_values: &[f64],
    budget: RunBudget,
    seed: u64,
    workers: usize,
) -> Result<Vec<SweepPoint>> {
    if mu_values.is_empty() {
        return Err(Error::param("mu_values", "must not be empty"));
    }
    let code = scenario_code(scenario)?;
    let point = |mu: f64| {
        let mut s = scenario.clone();
        s.pulses = pulses_at(&scenario.pulses, mu);
        run_with_code(&s, &code, budget, seed).map(|m| SweepPoint::from_metrics(mu, &m))
    };
    let workers = workers.clamp(1, mu_values.len());
    if workers == 1 {
        return mu_values.iter().map(|&mu| point(mu)).collect();
    }
    let mut slots: Vec<Option<Result<SweepPoint>>> = (0..mu_values.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let point = &point;
                scope.spawn(move || {
                    (w..mu_values.len()).step_by(workers).map(|i| (i, point(mu_values[i]))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every point computed")).collect()
}
