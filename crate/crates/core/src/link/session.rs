//! Alice and Bob session state machines.
//!
//! Each side is driven by [`AliceSession::step`] / [`BobSession::step`] with
//! either an inbound message or a local completion and answers with the
//! messages to send. A step that returns an error leaves the session exactly
//! as it was.
//!
//! Per frame: Alice announces, Bob reports his clicks, Alice answers with the
//! sift mask. Both sides apply the same mask, so both know when a full
//! reconciliation block is buffered; while one is, Bob requests its syndrome,
//! Alice sends SYNDROME and VERIFY, and Bob returns BLOCK_RESULT. After the
//! last frame Alice runs the decoy analysis, announces which corrected bits
//! carry signal intensity, sends the hash seed, and the two exchange
//! KEY_CONFIRM digests.

use std::fmt;
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::message::Message;
use crate::bits::{mix_seed, pack_bits, poly_digest, unpack_bits};
use crate::channel::{IntensityClass, PulseConfig};
use crate::config::Scenario;
use crate::decoy::{analyze_tally, KeyRateParams, TallyAnalysis, VacuumYield};
use crate::error::{Error, Result};
use crate::framing::QuantumFrame;
use crate::ldpc::{decode, LdpcCode};
use crate::privacy::{final_key_length, ntt, toeplitz_hash, toeplitz_hash_ntt, ToeplitzSeed};
use crate::sifting::{alice_sifted, apply_mask, sift_mask, BlockAssembler, DecoyTally, DetectionReport};
use crate::sim::{scenario_code, VERIFY_BITS};

const DIGEST_STREAM: u64 = 0xD1_6E57;
const PA_STREAM: u64 = 0x7A_5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    /// Bob between FRAME_ANNOUNCE and his local detection result.
    Collecting,
    AwaitingReport,
    AwaitingMask,
    Reconciling,
    Verifying,
    Amplifying,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Idle => "idle",
            Phase::Collecting => "collecting",
            Phase::AwaitingReport => "awaiting_report",
            Phase::AwaitingMask => "awaiting_mask",
            Phase::Reconciling => "reconciling",
            Phase::Verifying => "verifying",
            Phase::Amplifying => "amplifying",
            Phase::Done => "done",
        };
        f.write_str(s)
    }
}

/// Parameters both parties agree on before the session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub seed: u64,
    pub block_size: usize,
    pub code: Arc<LdpcCode>,
    pub decoder_prior: f64,
    pub max_iterations: usize,
    /// Public evaluation point of the block and key digests.
    pub digest_param: u64,
    pub pulses: PulseConfig,
    pub gate_stride: usize,
    pub key_rate: KeyRateParams,
    pub vacuum: VacuumYield,
    pub margin_bits: u64,
    /// Also count sift-mask bits as disclosed.
    pub count_mask_bits: bool,
}

impl SessionConfig {
    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let code = scenario_code(scenario)?;
        Ok(Self::with_code(scenario, Arc::new(code)))
    }

    /// Same as [`from_scenario`](Self::from_scenario) with an already built code.
    pub fn with_code(scenario: &Scenario, code: Arc<LdpcCode>) -> Self {
        SessionConfig {
            seed: scenario.seed,
            block_size: code.n(),
            code,
            decoder_prior: scenario.ldpc.qber_prior,
            max_iterations: scenario.ldpc.max_iterations,
            digest_param: mix_seed(scenario.seed, DIGEST_STREAM),
            pulses: scenario.pulses.clone(),
            gate_stride: scenario.detectors.gate_stride(scenario.clock.clock_rate_hz),
            key_rate: scenario.pa.key_rate,
            vacuum: scenario.pa.vacuum,
            margin_bits: scenario.pa.margin_bits,
            count_mask_bits: false,
        }
    }

    fn syndrome_bits(&self) -> u64 {
        self.code.m() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub frames: u64,
    pub sifted_bits: u64,
    pub blocks: u64,
    pub blocks_accepted: u64,
    /// Every syndrome and verification bit sent (plus mask bits when configured).
    pub disclosed_bits: u64,
    /// Disclosed bits attributable to accepted blocks; charged against the key.
    pub leakage_bits: u64,
    pub corrected_errors: u64,
}

#[derive(Debug, Clone)]
pub enum Local {
    /// Alice has sent a frame over the quantum channel.
    Transmit(QuantumFrame),
    /// Bob's detections for the announced frame.
    Detected { report: DetectionReport, bits: Vec<u8> },
    /// Alice ends the quantum phase and starts amplification.
    Finish,
}

#[derive(Debug, Clone)]
pub enum Event {
    Inbound(Message),
    Local(Local),
}

fn violation(phase: Phase, detail: impl Into<String>) -> Error {
    Error::ProtocolViolation { phase: phase.to_string(), detail: detail.into() }
}

fn unexpected(phase: Phase, event: &Event) -> Error {
    let what = match event {
        Event::Inbound(m) => format!("unexpected {}", m.name()),
        Event::Local(Local::Transmit(_)) => "cannot transmit now".into(),
        Event::Local(Local::Detected { .. }) => "no frame is being collected".into(),
        Event::Local(Local::Finish) => "cannot finish now".into(),
    };
    violation(phase, what)
}

fn key_digest(cfg: &SessionConfig, key: &[u8]) -> u64 {
    poly_digest(key, cfg.digest_param ^ 0x4B45_59)
}

fn hash_key(seed: &ToeplitzSeed, input: &[u8]) -> Result<Vec<u8>> {
    if seed.n_out() > 0 && (seed.n_in() + seed.bits().len()).next_power_of_two() <= ntt::MAX_LEN {
        toeplitz_hash_ntt(seed, input)
    } else {
        toeplitz_hash(seed, input)
    }
}

/// Alice's half of the session.
#[derive(Debug, Clone, PartialEq)]
pub struct AliceSession {
    cfg: Arc<SessionConfig>,
    phase: Phase,
    counters: Counters,
    frame: Option<QuantumFrame>,
    buffer: BlockAssembler,
    next_block: u32,
    pending: Option<(u32, Vec<u8>, Vec<IntensityClass>)>,
    tally: DecoyTally,
    corrected_by_class: [u64; 3],
    errors_by_class: [u64; 3],
    corrected: Vec<u8>,
    signal_flags: Vec<u8>,
    analysis: Option<TallyAnalysis>,
    key: Option<Vec<u8>>,
}

impl AliceSession {
    pub fn new(cfg: Arc<SessionConfig>) -> Self {
        let buffer = BlockAssembler::new(cfg.block_size);
        AliceSession {
            cfg,
            phase: Phase::Idle,
            counters: Counters::default(),
            frame: None,
            buffer,
            next_block: 0,
            pending: None,
            tally: DecoyTally::default(),
            corrected_by_class: [0; 3],
            errors_by_class: [0; 3],
            corrected: Vec::new(),
            signal_flags: Vec::new(),
            analysis: None,
            key: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn key(&self) -> Option<&[u8]> {
        self.key.as_deref()
    }

    pub fn analysis(&self) -> Option<&TallyAnalysis> {
        self.analysis.as_ref()
    }

    /// Tally with error counts extrapolated from the accepted blocks.
    pub fn tally(&self) -> DecoyTally {
        self.tally.with_extrapolated_errors(self.corrected_by_class, self.errors_by_class)
    }

    pub fn step(&mut self, event: Event) -> Result<Vec<Message>> {
        match (self.phase, event) {
            (Phase::Idle, Event::Local(Local::Transmit(frame))) => {
                let qubit_count = u32::try_from(frame.len())
                    .map_err(|_| Error::param("frame_qubits", "frame too long for the wire format"))?;
                let out = Message::FrameAnnounce { frame_number: frame.frame_number, qubit_count };
                self.frame = Some(frame);
                self.phase = Phase::AwaitingReport;
                Ok(vec![out])
            }
            (Phase::AwaitingReport, Event::Inbound(Message::DetectionReport { frame_number, entries })) => {
                let frame = self.frame.as_ref().expect("frame stored while awaiting its report");
                let report = DetectionReport { frame_number, entries };
                let mask = sift_mask(frame, &report)?;
                let sifted = alice_sifted(frame, &report, &mask);
                let frame = self.frame.take().expect("checked above");
                for q in frame.qubits.iter().step_by(self.cfg.gate_stride.max(1)) {
                    self.tally.sent[q.class.index()] += 1;
                }
                self.tally.add_sifted(&sifted.classes, &[]);
                self.buffer.push(&sifted);
                self.counters.frames += 1;
                self.counters.sifted_bits += sifted.len() as u64;
                if self.cfg.count_mask_bits {
                    self.counters.disclosed_bits += mask.len() as u64;
                }
                let bits: Vec<u8> = mask.iter().map(|&k| k as u8).collect();
                self.phase = self.after_block();
                Ok(vec![Message::SiftMask { frame_number, bitmap: pack_bits(&bits) }])
            }
            (Phase::Reconciling, Event::Inbound(Message::SyndromeRequest { block_id })) => {
                if block_id != self.next_block {
                    return Err(violation(self.phase, format!("request for block {block_id}, expected {}", self.next_block)));
                }
                let (bits, classes) = self.buffer.pop_block().expect("reconciling only with a full block");
                let parity = self.cfg.code.parities(&bits)?;
                let digest = poly_digest(&bits, self.cfg.digest_param);
                self.counters.blocks += 1;
                self.counters.disclosed_bits += self.cfg.syndrome_bits() + VERIFY_BITS;
                self.pending = Some((block_id, bits, classes));
                self.next_block += 1;
                self.phase = Phase::Verifying;
                Ok(vec![
                    Message::Syndrome { block_id, code_id: self.cfg.code.code_id(), parity: pack_bits(&parity) },
                    Message::Verify { block_id, digest },
                ])
            }
            (Phase::Verifying, Event::Inbound(Message::BlockResult { block_id, accepted, error_positions })) => {
                let (id, bits, _) = self.pending.as_ref().expect("verifying a pending block");
                if block_id != *id {
                    return Err(violation(self.phase, format!("result for block {block_id}, expected {id}")));
                }
                if !accepted && !error_positions.is_empty() {
                    return Err(violation(self.phase, "error positions on a rejected block"));
                }
                let ordered = error_positions.windows(2).all(|w| w[0] < w[1]);
                if !ordered || error_positions.last().is_some_and(|&p| p as usize >= bits.len()) {
                    return Err(violation(self.phase, "error positions out of order or range"));
                }
                let (_, bits, classes) = self.pending.take().expect("checked above");
                if accepted {
                    self.counters.blocks_accepted += 1;
                    self.counters.leakage_bits += self.cfg.syndrome_bits() + VERIFY_BITS;
                    self.counters.corrected_errors += error_positions.len() as u64;
                    for c in &classes {
                        self.corrected_by_class[c.index()] += 1;
                    }
                    for &p in &error_positions {
                        self.errors_by_class[classes[p as usize].index()] += 1;
                    }
                    self.signal_flags.extend(classes.iter().map(|&c| (c == IntensityClass::Signal) as u8));
                    self.corrected.extend(bits);
                }
                self.phase = self.after_block();
                Ok(vec![])
            }
            (Phase::Idle, Event::Local(Local::Finish)) => self.finish(),
            (Phase::Amplifying, Event::Inbound(Message::KeyConfirm { digest })) => {
                let key = self.key.as_ref().expect("key derived before confirmation");
                let own = key_digest(&self.cfg, key);
                if own != digest {
                    return Err(violation(self.phase, format!("key digest mismatch: {own:016x} vs {digest:016x}")));
                }
                self.phase = Phase::Done;
                Ok(vec![Message::KeyConfirm { digest: own }])
            }
            (phase, event) => Err(unexpected(phase, &event)),
        }
    }

    fn after_block(&self) -> Phase {
        if self.buffer.has_block() {
            Phase::Reconciling
        } else {
            Phase::Idle
        }
    }

    fn finish(&mut self) -> Result<Vec<Message>> {
        if self.corrected.is_empty() {
            return Err(Error::InsufficientData("corrected key"));
        }
        let analysis = analyze_tally(&self.tally(), &self.cfg.pulses, &self.cfg.key_rate, self.cfg.vacuum)?;
        let input: Vec<u8> = self
            .corrected
            .iter()
            .zip(&self.signal_flags)
            .filter(|(_, &s)| s == 1)
            .map(|(&b, _)| b)
            .collect();
        let n_out = final_key_length(
            input.len() as u64,
            &analysis.estimates,
            self.counters.leakage_bits,
            self.cfg.margin_bits,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.cfg.seed, PA_STREAM));
        let seed = ToeplitzSeed::random(&mut rng, input.len(), n_out)?;
        let key = hash_key(&seed, &input)?;
        let out = vec![
            Message::DecoyAnnounce { bit_count: self.signal_flags.len() as u32, bitmap: pack_bits(&self.signal_flags) },
            Message::PaSeed { n_in: input.len() as u32, n_out: n_out as u32, seed: pack_bits(seed.bits()) },
        ];
        self.analysis = Some(analysis);
        self.key = Some(key);
        self.phase = Phase::Amplifying;
        Ok(out)
    }
}

#[derive(Clone, PartialEq)]
struct OpenBlock {
    id: u32,
    bits: Vec<u8>,
    decoded: Option<(bool, Vec<u8>)>,
}

impl fmt::Debug for OpenBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenBlock").field("id", &self.id).field("decoded", &self.decoded.as_ref().map(|d| d.0)).finish()
    }
}

/// Bob's half of the session.
#[derive(Debug, Clone, PartialEq)]
pub struct BobSession {
    cfg: Arc<SessionConfig>,
    phase: Phase,
    counters: Counters,
    announced: Option<(u32, u32)>,
    reported: Option<(DetectionReport, Vec<u8>)>,
    buffer: BlockAssembler,
    next_block: u32,
    open: Option<OpenBlock>,
    corrected: Vec<u8>,
    signal_flags: Option<Vec<u8>>,
    key: Option<Vec<u8>>,
}

impl BobSession {
    pub fn new(cfg: Arc<SessionConfig>) -> Self {
        let buffer = BlockAssembler::new(cfg.block_size);
        BobSession {
            cfg,
            phase: Phase::Idle,
            counters: Counters::default(),
            announced: None,
            reported: None,
            buffer,
            next_block: 0,
            open: None,
            corrected: Vec::new(),
            signal_flags: None,
            key: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn key(&self) -> Option<&[u8]> {
        self.key.as_deref()
    }

    /// The frame Bob is collecting detections for: `(frame_number, qubit_count)`.
    pub fn announced(&self) -> Option<(u32, u32)> {
        self.announced
    }

    pub fn step(&mut self, event: Event) -> Result<Vec<Message>> {
        match (self.phase, event) {
            (Phase::Idle, Event::Inbound(Message::FrameAnnounce { frame_number, qubit_count })) => {
                self.announced = Some((frame_number, qubit_count));
                self.phase = Phase::Collecting;
                Ok(vec![])
            }
            (Phase::Collecting, Event::Local(Local::Detected { report, bits })) => {
                let (frame_number, count) = self.announced.expect("announced while collecting");
                if report.frame_number != frame_number || bits.len() != report.len() {
                    return Err(violation(self.phase, "detections do not match the announced frame"));
                }
                if report.entries.iter().any(|&(i, b)| i >= count || b > 1) {
                    return Err(violation(self.phase, "detection outside the announced frame"));
                }
                let out = Message::DetectionReport { frame_number, entries: report.entries.clone() };
                self.reported = Some((report, bits));
                self.announced = None;
                self.phase = Phase::AwaitingMask;
                Ok(vec![out])
            }
            (Phase::AwaitingMask, Event::Inbound(Message::SiftMask { frame_number, bitmap })) => {
                let (report, bits) = self.reported.as_ref().expect("report sent before awaiting the mask");
                if frame_number != report.frame_number {
                    return Err(violation(self.phase, format!("mask for frame {frame_number}, expected {}", report.frame_number)));
                }
                if bitmap.len() != report.len().div_ceil(8) {
                    return Err(violation(self.phase, format!("mask of {} bytes for {} entries", bitmap.len(), report.len())));
                }
                let mask: Vec<bool> = unpack_bits(&bitmap, report.len()).into_iter().map(|b| b == 1).collect();
                let sifted = apply_mask(report, bits, &mask)?;
                self.reported = None;
                self.buffer.push(&sifted);
                self.counters.frames += 1;
                self.counters.sifted_bits += sifted.len() as u64;
                if self.cfg.count_mask_bits {
                    self.counters.disclosed_bits += mask.len() as u64;
                }
                Ok(self.request_next())
            }
            (Phase::Reconciling, Event::Inbound(Message::Syndrome { block_id, code_id, parity })) => {
                let open = self.open.as_ref().expect("block open while reconciling");
                if block_id != open.id {
                    return Err(violation(self.phase, format!("syndrome for block {block_id}, expected {}", open.id)));
                }
                if code_id != self.cfg.code.code_id() {
                    return Err(violation(self.phase, format!("syndrome for code {code_id}")));
                }
                let m = self.cfg.code.m();
                if parity.len() != m.div_ceil(8) {
                    return Err(violation(self.phase, format!("syndrome of {} bytes for {m} checks", parity.len())));
                }
                let syndrome = unpack_bits(&parity, m);
                let r = decode(&self.cfg.code, &open.bits, &syndrome, self.cfg.decoder_prior, self.cfg.max_iterations)?;
                self.open.as_mut().expect("checked above").decoded = Some((r.success, r.corrected));
                self.phase = Phase::Verifying;
                Ok(vec![])
            }
            (Phase::Verifying, Event::Inbound(Message::Verify { block_id, digest })) => {
                let open = self.open.as_ref().expect("block open while verifying");
                if block_id != open.id {
                    return Err(violation(self.phase, format!("digest for block {block_id}, expected {}", open.id)));
                }
                let open = self.open.take().expect("checked above");
                let (success, corrected) = open.decoded.expect("decoded before verifying");
                let accepted = success && poly_digest(&corrected, self.cfg.digest_param) == digest;
                let disclosed = self.cfg.syndrome_bits() + VERIFY_BITS;
                self.counters.blocks += 1;
                self.counters.disclosed_bits += disclosed;
                let mut error_positions = Vec::new();
                if accepted {
                    error_positions = (0..corrected.len())
                        .filter(|&i| corrected[i] != open.bits[i])
                        .map(|i| i as u32)
                        .collect();
                    self.counters.blocks_accepted += 1;
                    self.counters.leakage_bits += disclosed;
                    self.counters.corrected_errors += error_positions.len() as u64;
                    self.corrected.extend(corrected);
                }
                let mut out = vec![Message::BlockResult { block_id, accepted, error_positions }];
                out.extend(self.request_next());
                Ok(out)
            }
            (Phase::Idle, Event::Inbound(Message::DecoyAnnounce { bit_count, bitmap })) => {
                if bit_count as usize != self.corrected.len() {
                    return Err(violation(
                        self.phase,
                        format!("class flags for {bit_count} bits, {} corrected", self.corrected.len()),
                    ));
                }
                self.signal_flags = Some(unpack_bits(&bitmap, bit_count as usize));
                self.phase = Phase::Amplifying;
                Ok(vec![])
            }
            (Phase::Amplifying, Event::Inbound(Message::PaSeed { n_in, n_out, seed })) if self.key.is_none() => {
                let flags = self.signal_flags.as_ref().expect("flags received before amplifying");
                let input: Vec<u8> =
                    self.corrected.iter().zip(flags).filter(|(_, &s)| s == 1).map(|(&b, _)| b).collect();
                if n_in as usize != input.len() {
                    return Err(violation(self.phase, format!("hash input of {n_in} bits, {} available", input.len())));
                }
                let len = if n_out == 0 { 0 } else { (n_in + n_out - 1) as usize };
                if seed.len() != len.div_ceil(8) {
                    return Err(violation(self.phase, "hash seed length does not match its dimensions"));
                }
                let seed = ToeplitzSeed::new(unpack_bits(&seed, len), n_in as usize, n_out as usize)?;
                let key = hash_key(&seed, &input)?;
                let digest = key_digest(&self.cfg, &key);
                self.key = Some(key);
                Ok(vec![Message::KeyConfirm { digest }])
            }
            (Phase::Amplifying, Event::Inbound(Message::KeyConfirm { digest })) if self.key.is_some() => {
                let own = key_digest(&self.cfg, self.key.as_ref().expect("guarded"));
                if own != digest {
                    return Err(violation(self.phase, format!("key digest mismatch: {own:016x} vs {digest:016x}")));
                }
                self.phase = Phase::Done;
                Ok(vec![])
            }
            (phase, event) => Err(unexpected(phase, &event)),
        }
    }

    fn request_next(&mut self) -> Vec<Message> {
        match self.buffer.pop_block() {
            Some((bits, _)) => {
                let id = self.next_block;
                self.next_block += 1;
                self.open = Some(OpenBlock { id, bits, decoded: None });
                self.phase = Phase::Reconciling;
                vec![Message::SyndromeRequest { block_id: id }]
            }
            None => {
                self.phase = Phase::Idle;
                vec![]
            }
        }
    }
}

/// Digest both sides publish in KEY_CONFIRM.
pub fn final_key_digest(cfg: &SessionConfig, key: &[u8]) -> u64 {
    key_digest(cfg, key)
}
