//! Scenario aggregate and its sectioned `key = value` file format.
//!
//! ```text
//! [scenario]
//! preset = fast        # commercial (default), fast or link
//! seed = 7
//!
//! [source]
//! mu = 0.5
//! nu1 = 0.1
//! nu2 = 0.005
//! ```
//!
//! Missing keys keep the preset's value; unknown keys are rejected.

use std::path::Path;

use ini::Ini;

use crate::channel::{ChannelParams, DetectorParams, DriftParams, PulseConfig};
use crate::decoy::{KeyRateParams, VacuumYield};
use crate::error::{Error, Result};
use crate::framing::{ClockConfig, StageDefaults};
use crate::sim::{ControlParams, CpuModel, DetectionMode, TaskCosts};

#[derive(Debug, Clone, PartialEq)]
pub struct LdpcSettings {
    pub block_size: usize,
    /// QBER the code is sized for.
    pub target_qber: f64,
    /// Syndrome length over `n H2(target_qber)`.
    pub efficiency: f64,
    pub max_iterations: usize,
    pub code_seed: u64,
    /// Crossover probability assumed by the decoder.
    pub qber_prior: f64,
}

impl Default for LdpcSettings {
    fn default() -> Self {
        LdpcSettings {
            block_size: crate::sifting::DEFAULT_BLOCK_SIZE,
            target_qber: 0.035,
            efficiency: 1.2,
            max_iterations: crate::ldpc::DEFAULT_MAX_ITERATIONS,
            code_seed: 1,
            qber_prior: 0.035,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaSettings {
    pub key_rate: KeyRateParams,
    pub vacuum: VacuumYield,
    /// Bits subtracted from every final key length.
    pub margin_bits: u64,
}

impl Default for PaSettings {
    fn default() -> Self {
        PaSettings { key_rate: KeyRateParams::default(), vacuum: VacuumYield::DecoyBound, margin_bits: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub detection: DetectionMode,
    pub message_delay_ms: f64,
    /// Metrics sampling period; 0 disables the time series.
    pub sample_interval_ms: f64,
    /// Default frame budget for a run.
    pub frames: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings { detection: DetectionMode::Counts, message_delay_ms: 5.0, sample_interval_ms: 1000.0, frames: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    /// Four gated commercial detectors at 1 MHz.
    #[default]
    Commercial,
    /// One fast detector gated at the source clock; the rate-curve calibration.
    Fast,
    /// Short, high-transmittance session at 3.5% QBER for classical-link runs.
    Link,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Commercial => "commercial",
            Preset::Fast => "fast",
            Preset::Link => "link",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "commercial" => Some(Preset::Commercial),
            "fast" => Some(Preset::Fast),
            "link" => Some(Preset::Link),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub preset: Preset,
    pub seed: u64,
    pub pulses: PulseConfig,
    pub channel: ChannelParams,
    pub detectors: DetectorParams,
    pub clock: ClockConfig,
    pub stages: StageDefaults,
    pub control: ControlParams,
    pub cpu: CpuModel,
    pub tasks: TaskCosts,
    pub ldpc: LdpcSettings,
    pub pa: PaSettings,
    pub sim: SimSettings,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::commercial()
    }
}

impl Scenario {
    pub fn commercial() -> Self {
        Scenario {
            preset: Preset::Commercial,
            seed: 1,
            pulses: PulseConfig::default(),
            channel: ChannelParams::default(),
            detectors: DetectorParams::default(),
            clock: ClockConfig::default(),
            stages: StageDefaults::default(),
            control: ControlParams::default(),
            cpu: CpuModel::default(),
            tasks: TaskCosts::default(),
            ldpc: LdpcSettings::default(),
            pa: PaSettings::default(),
            sim: SimSettings::default(),
        }
    }

    pub fn fast() -> Self {
        Scenario {
            preset: Preset::Fast,
            channel: ChannelParams {
                y0: 1e-7,
                e_det: 0.015,
                drift: DriftParams { step_sigma: 0.006, reset_value: 0.0 },
                ..ChannelParams::default()
            },
            detectors: DetectorParams {
                efficiency: 0.025,
                gate_rate_hz: 1e8,
                detector_count: 1,
                dark_prob_per_gate: 1e-7,
            },
            ..Scenario::commercial()
        }
    }

    pub fn link() -> Self {
        let detectors = DetectorParams { efficiency: 0.08, gate_rate_hz: 1e8, detector_count: 4, dark_prob_per_gate: 1e-7 };
        Scenario {
            preset: Preset::Link,
            channel: ChannelParams {
                loss_db: 0.0,
                receiver_loss_db: 0.0,
                y0: detectors.dark_yield(),
                e_det: 0.035,
                drift: DriftParams { step_sigma: 0.0, reset_value: 0.0 },
                ..ChannelParams::default()
            },
            detectors,
            clock: ClockConfig { clock_rate_hz: 1e8, frame_qubits: 1_000_000 },
            sim: SimSettings { frames: 12, ..SimSettings::default() },
            ..Scenario::commercial()
        }
    }

    pub fn from_preset(preset: Preset) -> Self {
        match preset {
            Preset::Commercial => Scenario::commercial(),
            Preset::Fast => Scenario::fast(),
            Preset::Link => Scenario::link(),
        }
    }

    /// Checks every component, reporting the offending field as `section.key`.
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, Result<()>); 10] = [
            ("source", self.pulses.validate()),
            ("source", self.clock.validate()),
            ("channel", self.channel.validate()),
            ("detector", self.detectors.validate(self.clock.clock_rate_hz)),
            ("timeline", self.stages.validate()),
            ("control", self.control.validate()),
            ("cpu", self.cpu.validate()),
            ("tasks", self.tasks.validate()),
            ("ldpc", self.validate_ldpc()),
            ("pa", self.validate_pa()),
        ];
        for (section, r) in checks {
            r.map_err(|e| qualify(section, e))?;
        }
        let s = &self.sim;
        if !(s.message_delay_ms >= 0.0 && s.message_delay_ms.is_finite()) {
            return Err(validation("sim.message_delay_ms", "must be finite and non-negative"));
        }
        if !(s.sample_interval_ms >= 0.0 && s.sample_interval_ms.is_finite()) {
            return Err(validation("sim.sample_interval_ms", "must be finite and non-negative"));
        }
        Ok(())
    }

    fn validate_ldpc(&self) -> Result<()> {
        let l = &self.ldpc;
        if l.block_size < 6 {
            return Err(Error::param("block_size", "must be at least 6"));
        }
        crate::ldpc::check_count(l.block_size, l.target_qber, l.efficiency).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::param(name, reason),
            other => Error::param("efficiency", other.to_string()),
        })?;
        if l.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        if !(l.qber_prior > 0.0 && l.qber_prior < 0.5) {
            return Err(Error::param("qber_prior", "must lie in (0, 0.5)"));
        }
        Ok(())
    }

    fn validate_pa(&self) -> Result<()> {
        self.pa.key_rate.validate()?;
        if let VacuumYield::Fixed(y) = self.pa.vacuum {
            if !(0.0..1.0).contains(&y) {
                return Err(Error::param("vacuum", "fixed vacuum yield must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

fn validation(field: &str, message: &str) -> Error {
    Error::Validation { field: field.into(), message: message.into() }
}

fn qualify(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => {
            let key = KEY_ALIASES.iter().find(|a| a.1 == name).map_or(name, |a| a.0);
            Error::Validation { field: format!("{section}.{key}"), message: reason }
        }
        Error::InvalidDecoyConfig(message) => Error::Validation { field: section.into(), message },
        other => other,
    }
}

/// File keys whose struct field is named differently.
const KEY_ALIASES: [(&str, &str); 7] = [
    ("p_mu", "class_probabilities"),
    ("count", "detector_count"),
    ("dark_prob", "dark_prob_per_gate"),
    ("drift_sigma", "step_sigma"),
    ("drift_reset", "reset_value"),
    ("alice", "alice_capacity"),
    ("bob", "bob_capacity"),
];

pub fn parse_config(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

fn check_line_shapes(text: &str) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let bad = if line.is_empty() || line.starts_with(';') || line.starts_with('#') {
            None
        } else if line.starts_with('[') {
            (!line.ends_with(']') || line.len() < 3).then_some("section header must look like [name]")
        } else {
            match line.split_once('=') {
                Some((key, _)) if !key.trim().is_empty() => None,
                _ => Some("expected key = value"),
            }
        };
        if let Some(message) = bad {
            return Err(Error::ConfigParse { line: i + 1, message: message.into() });
        }
    }
    Ok(())
}

pub fn parse_config_str(text: &str) -> Result<Scenario> {
    check_line_shapes(text)?;
    let ini = Ini::load_from_str(text)
        .map_err(|e| Error::ConfigParse { line: e.line, message: e.msg.into_owned() })?;

    let mut entries = Vec::new();
    for (section, props) in ini.iter() {
        for (key, value) in props.iter() {
            entries.push((section.unwrap_or("").to_owned(), key.to_owned(), value.trim().to_owned()));
        }
    }

    let preset = match entries.iter().find(|e| e.0 == "scenario" && e.1 == "preset") {
        Some(e) => Preset::parse(&e.2)
            .ok_or_else(|| validation("scenario.preset", "expected `commercial`, `fast` or `link`"))?,
        None => Preset::default(),
    };
    let mut sc = Scenario::from_preset(preset);
    let explicit_y0 = entries.iter().any(|e| e.0 == "channel" && e.1 == "y0");

    let mut unknown = Vec::new();
    for (section, key, value) in &entries {
        let field = format!("{section}.{key}");
        if !apply(&mut sc, section, key, value, &field)? {
            unknown.push(field);
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownKeys(unknown));
    }
    if !explicit_y0 && entries.iter().any(|e| e.0 == "detector" && (e.1 == "dark_prob" || e.1 == "count")) {
        sc.channel.y0 = sc.detectors.dark_yield();
    }
    sc.validate()?;
    Ok(sc)
}

fn num<T: std::str::FromStr>(value: &str, field: &str) -> Result<T> {
    value.parse().map_err(|_| validation(field, &format!("cannot parse `{value}`")))
}

fn float(value: &str, field: &str) -> Result<f64> {
    match value {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => num(value, field),
    }
}

/// Stores one entry; returns false for an unknown key.
fn apply(sc: &mut Scenario, section: &str, key: &str, value: &str, field: &str) -> Result<bool> {
    let f = |v: &str| float(v, field);
    match (section, key) {
        ("scenario", "preset") => {}
        ("scenario", "seed") => sc.seed = num(value, field)?,

        ("source", "mu") => sc.pulses.mu = f(value)?,
        ("source", "nu1") => sc.pulses.nu1 = f(value)?,
        ("source", "nu2") => sc.pulses.nu2 = f(value)?,
        ("source", "p_mu") => sc.pulses.class_probabilities[0] = f(value)?,
        ("source", "p_nu1") => sc.pulses.class_probabilities[1] = f(value)?,
        ("source", "p_nu2") => sc.pulses.class_probabilities[2] = f(value)?,
        ("source", "clock_rate_hz") => sc.clock.clock_rate_hz = f(value)?,
        ("source", "frame_qubits") => sc.clock.frame_qubits = num(value, field)?,

        ("channel", "loss_db") => sc.channel.loss_db = f(value)?,
        ("channel", "receiver_loss_db") => sc.channel.receiver_loss_db = f(value)?,
        ("channel", "y0") => sc.channel.y0 = f(value)?,
        ("channel", "e_det") => sc.channel.e_det = f(value)?,
        ("channel", "drift_sigma") => sc.channel.drift.step_sigma = f(value)?,
        ("channel", "drift_reset") => sc.channel.drift.reset_value = f(value)?,

        ("detector", "efficiency") => sc.detectors.efficiency = f(value)?,
        ("detector", "gate_rate_hz") => sc.detectors.gate_rate_hz = f(value)?,
        ("detector", "count") => sc.detectors.detector_count = num(value, field)?,
        ("detector", "dark_prob") => sc.detectors.dark_prob_per_gate = f(value)?,

        ("timeline", "generation_ms") => sc.stages.generation_ms = f(value)?,
        ("timeline", "transfer_ms") => sc.stages.transfer_ms = f(value)?,
        ("timeline", "header_ms") => sc.stages.header_ms = f(value)?,
        ("timeline", "deadtime_before_ms") => sc.stages.deadtime_before_ms = f(value)?,
        ("timeline", "deadtime_after_ms") => sc.stages.deadtime_after_ms = f(value)?,
        ("timeline", "pol_comp_average_ms") => sc.stages.pol_comp_average_ms = f(value)?,

        ("control", "qber_threshold") => sc.control.qber_threshold = f(value)?,
        ("control", "comp_duration_ms") => sc.control.comp_duration_ms = f(value)?,
        ("control", "powermeter_rate_hz") => sc.control.powermeter_rate_hz = f(value)?,

        ("cpu", "alice") => sc.cpu.alice_capacity = f(value)?,
        ("cpu", "bob") => sc.cpu.bob_capacity = f(value)?,
        ("cpu", "policy") => {
            if value != "fair_share" {
                return Err(validation(field, "only `fair_share` is supported"));
            }
        }

        ("tasks", "alice_frame_ms") => sc.tasks.alice_frame_ms = f(value)?,
        ("tasks", "alice_ms_per_kbit") => sc.tasks.alice_ms_per_kbit = f(value)?,
        ("tasks", "log_ms") => sc.tasks.log_ms = f(value)?,
        ("tasks", "sift_ms_per_kbit") => sc.tasks.sift_ms_per_kbit = f(value)?,
        ("tasks", "ec_ms_per_kbit") => sc.tasks.ec_ms_per_kbit = f(value)?,
        ("tasks", "ec_capacity_kbps") => {
            let kbps = f(value)?;
            if !(kbps > 0.0) {
                return Err(validation(field, "must be positive"));
            }
            sc.tasks.ec_ms_per_kbit = 1000.0 / kbps;
        }

        ("ldpc", "block_size") => sc.ldpc.block_size = num(value, field)?,
        ("ldpc", "target_qber") => sc.ldpc.target_qber = f(value)?,
        ("ldpc", "efficiency") => sc.ldpc.efficiency = f(value)?,
        ("ldpc", "max_iterations") => sc.ldpc.max_iterations = num(value, field)?,
        ("ldpc", "code_seed") => sc.ldpc.code_seed = num(value, field)?,
        ("ldpc", "qber_prior") => sc.ldpc.qber_prior = f(value)?,

        ("pa", "f_ec") => sc.pa.key_rate.f_ec = f(value)?,
        ("pa", "q_sift") => sc.pa.key_rate.q_sift = f(value)?,
        ("pa", "margin_bits") => sc.pa.margin_bits = num(value, field)?,
        ("pa", "vacuum") => {
            sc.pa.vacuum = match value {
                "bound" => VacuumYield::DecoyBound,
                v => VacuumYield::Fixed(f(v)?),
            }
        }

        ("sim", "detection") => {
            sc.sim.detection = match value {
                "counts" => DetectionMode::Counts,
                "pulse" => DetectionMode::Pulse,
                _ => return Err(validation(field, "expected `counts` or `pulse`")),
            }
        }
        ("sim", "message_delay_ms") => sc.sim.message_delay_ms = f(value)?,
        ("sim", "sample_interval_ms") => sc.sim.sample_interval_ms = f(value)?,
        ("sim", "frames") => sc.sim.frames = num(value, field)?,

        _ => return Ok(false),
    }
    Ok(true)
}
