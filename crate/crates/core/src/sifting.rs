//! Coincidence handling, basis reconciliation and decoy bookkeeping.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{DetectionEvent, IntensityClass};
use crate::error::{Error, Result};
use crate::framing::QuantumFrame;

/// Default reconciliation block size in bits.
pub const DEFAULT_BLOCK_SIZE: usize = 10_000;

/// Keeps exactly one detection per gate. Where several detectors fired, the
/// survivor is drawn uniformly from the seeded stream.
pub fn collapse_coincidences(events: &[DetectionEvent], seed: u64) -> Vec<DetectionEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(events.len());
    let mut i = 0;
    while i < events.len() {
        let mut j = i + 1;
        while j < events.len() && events[j].pulse_index == events[i].pulse_index {
            j += 1;
        }
        let pick = if j - i > 1 { i + rng.random_range(0..j - i) } else { i };
        out.push(events[pick]);
        i = j;
    }
    out
}

/// Bob's announcement: which pulses clicked and in which basis. Bits stay private.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionReport {
    pub frame_number: u32,
    pub entries: Vec<(u32, u8)>,
}

impl DetectionReport {
    /// Builds the report and Bob's private bit list from collapsed events.
    pub fn from_events(frame_number: u32, events: &[DetectionEvent]) -> (Self, Vec<u8>) {
        let entries = events.iter().map(|e| (e.pulse_index, e.bob_basis)).collect();
        let bits = events.iter().map(|e| e.bob_bit).collect();
        (DetectionReport { frame_number, entries }, bits)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftedBlock {
    pub bits: Vec<u8>,
    pub origin: Vec<(u32, u32)>,
    pub classes: Vec<IntensityClass>,
}

impl SiftedBlock {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn extend(&mut self, other: SiftedBlock) {
        self.bits.extend(other.bits);
        self.origin.extend(other.origin);
        self.classes.extend(other.classes);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiftOutcome {
    pub alice: SiftedBlock,
    pub bob: SiftedBlock,
    pub keep_mask: Vec<bool>,
}

/// Alice's side: compares Bob's bases against her own record.
pub fn sift_mask(frame: &QuantumFrame, report: &DetectionReport) -> Result<Vec<bool>> {
    validate_report(frame, report)?;
    Ok(report
        .entries
        .iter()
        .map(|&(idx, basis)| frame.qubits[idx as usize].basis == basis)
        .collect())
}

/// Alice's sifted bits for a mask she computed.
pub fn alice_sifted(frame: &QuantumFrame, report: &DetectionReport, mask: &[bool]) -> SiftedBlock {
    let mut block = SiftedBlock::default();
    for (&(idx, _), _) in report.entries.iter().zip(mask).filter(|(_, &keep)| keep) {
        let q = frame.qubits[idx as usize];
        block.bits.push(q.bit);
        block.origin.push((frame.frame_number, idx));
        block.classes.push(q.class);
    }
    block
}

/// Bob's side: applies Alice's mask to his own bits. Bob does not know the
/// intensity classes, so his block carries the signal class placeholder.
pub fn apply_mask(report: &DetectionReport, bob_bits: &[u8], mask: &[bool]) -> Result<SiftedBlock> {
    if mask.len() != report.len() || bob_bits.len() != report.len() {
        return Err(Error::ProtocolViolation {
            phase: "sifting".into(),
            detail: format!(
                "mask of {} entries for a report of {} ({} bits)",
                mask.len(),
                report.len(),
                bob_bits.len()
            ),
        });
    }
    let mut block = SiftedBlock::default();
    for ((&(idx, _), &bit), _) in report.entries.iter().zip(bob_bits).zip(mask).filter(|(_, &k)| k) {
        block.bits.push(bit);
        block.origin.push((report.frame_number, idx));
        block.classes.push(IntensityClass::Signal);
    }
    Ok(block)
}

/// Both sides of basis reconciliation, for in-process use. Bob's block is
/// given Alice's class labels so the two stay aligned.
pub fn sift(frame: &QuantumFrame, report: &DetectionReport, bob_bits: &[u8]) -> Result<SiftOutcome> {
    let keep_mask = sift_mask(frame, report)?;
    let alice = alice_sifted(frame, report, &keep_mask);
    let mut bob = apply_mask(report, bob_bits, &keep_mask)?;
    bob.classes.clone_from(&alice.classes);
    Ok(SiftOutcome { alice, bob, keep_mask })
}

fn validate_report(frame: &QuantumFrame, report: &DetectionReport) -> Result<()> {
    if report.frame_number != frame.frame_number {
        return Err(Error::ProtocolViolation {
            phase: "sifting".into(),
            detail: format!("report for frame {} against frame {}", report.frame_number, frame.frame_number),
        });
    }
    let mut prev: Option<u32> = None;
    for &(idx, basis) in &report.entries {
        if idx as usize >= frame.len() {
            return Err(Error::ProtocolViolation {
                phase: "sifting".into(),
                detail: format!("pulse index {idx} out of range for {} qubits", frame.len()),
            });
        }
        if basis > 1 {
            return Err(Error::ProtocolViolation {
                phase: "sifting".into(),
                detail: format!("basis value {basis}"),
            });
        }
        if prev.is_some_and(|p| p >= idx) {
            return Err(Error::ProtocolViolation {
                phase: "sifting".into(),
                detail: "report indices not strictly increasing".into(),
            });
        }
        prev = Some(idx);
    }
    Ok(())
}

/// Per-class sent/detected/error counts for decoy analysis. "Detected" counts
/// matched-basis (sifted) detections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecoyTally {
    pub sent: [u64; 3],
    pub detected: [u64; 3],
    pub errors: [u64; 3],
}

impl DecoyTally {
    /// Adds one frame's contribution: gated pulses per class, the sifted
    /// bits (with their classes) and the positions, relative to `sifted`,
    /// that error correction found flipped.
    pub fn accumulate(
        &mut self,
        frame: &QuantumFrame,
        gate_stride: usize,
        sifted: &SiftedBlock,
        error_positions: &[usize],
    ) {
        for q in frame.qubits.iter().step_by(gate_stride.max(1)) {
            self.sent[q.class.index()] += 1;
        }
        self.add_sifted(&sifted.classes, error_positions);
    }

    pub fn add_sent(&mut self, class: IntensityClass, count: u64) {
        self.sent[class.index()] += count;
    }

    pub fn add_sifted(&mut self, classes: &[IntensityClass], error_positions: &[usize]) {
        for c in classes {
            self.detected[c.index()] += 1;
        }
        for &p in error_positions {
            if let Some(c) = classes.get(p) {
                self.errors[c.index()] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &DecoyTally) {
        for i in 0..3 {
            self.sent[i] += other.sent[i];
            self.detected[i] += other.detected[i];
            self.errors[i] += other.errors[i];
        }
    }

    pub fn total_detected(&self) -> u64 {
        self.detected.iter().sum()
    }

    /// Error counts extrapolated from the corrected subset: each class gets the
    /// error rate seen in its corrected bits applied to all its detections.
    pub fn with_extrapolated_errors(&self, corrected: [u64; 3], corrected_errors: [u64; 3]) -> DecoyTally {
        let mut t = *self;
        for i in 0..3 {
            t.errors[i] = if corrected[i] > 0 {
                let rate = corrected_errors[i] as f64 / corrected[i] as f64;
                ((rate * t.detected[i] as f64).round() as u64).min(t.detected[i])
            } else {
                0
            };
        }
        t
    }

    pub fn is_consistent(&self) -> bool {
        (0..3).all(|i| self.errors[i] <= self.detected[i] && self.detected[i] <= self.sent[i])
    }
}

/// Functional form of [`DecoyTally::accumulate`].
pub fn accumulate_tally(
    tally: DecoyTally,
    frame: &QuantumFrame,
    gate_stride: usize,
    sifted: &SiftedBlock,
    error_positions: &[usize],
) -> DecoyTally {
    let mut t = tally;
    t.accumulate(frame, gate_stride, sifted, error_positions);
    t
}

/// Buffers sifted bits and releases fixed-size reconciliation blocks; the
/// remainder carries over to the next block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAssembler {
    block_size: usize,
    bits: VecDeque<u8>,
    classes: VecDeque<IntensityClass>,
}

impl BlockAssembler {
    pub fn new(block_size: usize) -> Self {
        BlockAssembler { block_size, bits: VecDeque::new(), classes: VecDeque::new() }
    }

    pub fn push(&mut self, block: &SiftedBlock) {
        self.bits.extend(&block.bits);
        self.classes.extend(&block.classes);
    }

    pub fn buffered(&self) -> usize {
        self.bits.len()
    }

    pub fn has_block(&self) -> bool {
        self.bits.len() >= self.block_size
    }

    pub fn pop_block(&mut self) -> Option<(Vec<u8>, Vec<IntensityClass>)> {
        if !self.has_block() {
            return None;
        }
        let bits = self.bits.drain(..self.block_size).collect();
        let classes = self.classes.drain(..self.block_size).collect();
        Some((bits, classes))
    }
}
