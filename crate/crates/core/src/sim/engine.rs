use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::detect::{detect, FrameData};
use super::{PipelineMetrics, RunBudget, Sample};
use crate::bits::mix_seed;
use crate::channel::IntensityClass;
use crate::config::Scenario;
use crate::ldpc::{decode, LdpcCode};
use crate::sifting::DecoyTally;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Proc {
    AliceMain,
    AlicePost,
    BobLog,
    BobSift,
    BobEc,
}

const PROCS: [Proc; 5] = [Proc::AliceMain, Proc::AlicePost, Proc::BobLog, Proc::BobSift, Proc::BobEc];

impl Proc {
    fn on_alice(self) -> bool {
        matches!(self, Proc::AliceMain | Proc::AlicePost)
    }
}

#[derive(Debug)]
enum JobKind {
    Generate,
    Transfer,
    AlicePost { frame: u32 },
    Log,
    Sift { data: Box<FrameData>, sent_ms: f64 },
    Correct(Block),
}

#[derive(Debug)]
struct Job {
    remaining: f64,
    kind: JobKind,
}

#[derive(Debug)]
struct Block {
    alice: Vec<u8>,
    bob: Vec<u8>,
    classes: Vec<IntensityClass>,
    /// End of transmission of the oldest frame contributing bits.
    oldest_ms: f64,
}

#[derive(Debug)]
enum Event {
    TransmissionEnd { frame: u32 },
    DeadtimeEnd { frame: u32 },
    ReportArrives { frame: u32 },
    MaskArrives { frame: u32 },
    CompensationEnd,
    Sample,
    Stop,
}

struct Timed {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Timed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Timed {}
impl PartialOrd for Timed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Timed {
    // reversed: BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
struct EcBuffer {
    alice: VecDeque<u8>,
    bob: VecDeque<u8>,
    classes: VecDeque<IntensityClass>,
    chunks: VecDeque<(usize, f64)>,
}

impl EcBuffer {
    fn push(&mut self, data: &FrameData, time_ms: f64) {
        if data.alice.is_empty() {
            return;
        }
        self.alice.extend(&data.alice);
        self.bob.extend(&data.bob);
        self.classes.extend(&data.classes);
        self.chunks.push_back((data.alice.len(), time_ms));
    }

    fn len(&self) -> usize {
        self.alice.len()
    }

    fn pop(&mut self, n: usize) -> Block {
        let oldest_ms = self.chunks.front().map_or(0.0, |c| c.1);
        let mut need = n;
        while need > 0 {
            let front = self.chunks.front_mut().expect("buffer holds n bits");
            if front.0 <= need {
                need -= front.0;
                self.chunks.pop_front();
            } else {
                front.0 -= need;
                need = 0;
            }
        }
        Block {
            alice: self.alice.drain(..n).collect(),
            bob: self.bob.drain(..n).collect(),
            classes: self.classes.drain(..n).collect(),
            oldest_ms,
        }
    }
}

pub(super) struct Engine<'a> {
    sc: &'a Scenario,
    code: &'a LdpcCode,
    budget: RunBudget,
    seed: u64,
    now: f64,
    seq: u64,
    heap: BinaryHeap<Timed>,
    queues: [VecDeque<Job>; 5],
    stopped: bool,

    frame: u32,
    transmission_started: bool,
    deadtime_done: bool,
    report_arrived: bool,
    waiting_since: Option<f64>,
    /// Frames awaiting their sift mask, with their transmission end times.
    pending: Vec<(FrameData, f64)>,

    drift: f64,
    drift_time: f64,
    drift_rng: ChaCha8Rng,
    comp_pending: bool,
    last_comp_end: f64,

    ec: EcBuffer,
    sift_queue_bits: u64,
    corrected_by_class: [u64; 3],
    errors_by_class: [u64; 3],
    m: PipelineMetrics,
}

impl<'a> Engine<'a> {
    pub(super) fn new(sc: &'a Scenario, code: &'a LdpcCode, budget: RunBudget, seed: u64) -> Self {
        Engine {
            sc,
            code,
            budget,
            seed,
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            queues: Default::default(),
            stopped: false,
            frame: 0,
            transmission_started: false,
            deadtime_done: false,
            report_arrived: false,
            waiting_since: None,
            pending: Vec::new(),
            drift: sc.channel.drift.reset_value,
            drift_time: 0.0,
            drift_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xd71f7)),
            comp_pending: false,
            last_comp_end: 0.0,
            ec: EcBuffer::default(),
            sift_queue_bits: 0,
            corrected_by_class: [0; 3],
            errors_by_class: [0; 3],
            m: PipelineMetrics {
                samples: Vec::new(),
                total_time_ms: 0.0,
                transmission_time_ms: 0.0,
                frames_sent: 0,
                raw_bits: 0,
                sifted_bits: 0,
                corrected_bits: 0,
                blocks_attempted: 0,
                blocks_failed: 0,
                compensation_events: 0,
                compensation_time_ms: 0.0,
                wait_time_ms: 0.0,
                corrected_errors: 0,
                tally: DecoyTally::default(),
                corrected_signal_bits: 0,
                leakage_bits: 0,
                analysis: None,
                secret_bits: 0,
            },
        }
    }

    fn schedule(&mut self, delay: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Timed { time: self.now + delay, seq: self.seq, event });
    }

    fn push_job(&mut self, proc: Proc, work: f64, kind: JobKind) {
        self.queues[proc as usize].push_back(Job { remaining: work.max(0.0), kind });
    }

    fn capacity(&self, proc: Proc) -> f64 {
        if proc.on_alice() {
            self.sc.cpu.alice_capacity
        } else {
            self.sc.cpu.bob_capacity
        }
    }

    /// Fair-share rate of each busy process on `proc`'s host.
    fn rate(&self, proc: Proc) -> f64 {
        let busy = PROCS
            .iter()
            .filter(|p| p.on_alice() == proc.on_alice() && !self.queues[**p as usize].is_empty())
            .count();
        self.capacity(proc) / busy.max(1) as f64
    }

    fn next_completion(&self) -> Option<(f64, Proc)> {
        let mut best: Option<(f64, Proc)> = None;
        for p in PROCS {
            if let Some(job) = self.queues[p as usize].front() {
                let rate = self.rate(p);
                let dt = if rate.is_infinite() || job.remaining <= 0.0 { 0.0 } else { job.remaining / rate };
                if best.is_none_or(|(t, _)| dt < t) {
                    best = Some((dt, p));
                }
            }
        }
        best
    }

    fn advance(&mut self, dt: f64) {
        if dt > 0.0 {
            let rates: Vec<f64> = PROCS.iter().map(|&p| self.rate(p)).collect();
            for (i, q) in self.queues.iter_mut().enumerate() {
                if let Some(job) = q.front_mut() {
                    job.remaining -= rates[i] * dt;
                }
            }
        }
        self.now += dt;
    }

    pub(super) fn run(mut self) -> PipelineMetrics {
        if let RunBudget::DurationMs(ms) = self.budget {
            self.schedule(ms, Event::Stop);
        }
        if self.sc.sim.sample_interval_ms > 0.0 {
            self.schedule(0.0, Event::Sample);
        }
        self.start_frame();
        while !self.stopped {
            let cpu = self.next_completion();
            let timed = self.heap.peek().map(|t| t.time - self.now);
            match (cpu, timed) {
                (Some((dt, p)), Some(te)) if dt <= te => {
                    self.advance(dt);
                    self.complete(p);
                }
                (Some((dt, p)), None) => {
                    self.advance(dt);
                    self.complete(p);
                }
                (_, Some(te)) => {
                    self.advance(te.max(0.0));
                    let t = self.heap.pop().expect("peeked");
                    self.handle(t.event);
                }
                (None, None) => break,
            }
        }
        self.m.total_time_ms = self.now;
        self.finish_tally();
        self.m
    }

    fn finish_tally(&mut self) {
        self.m.tally = self.m.tally.with_extrapolated_errors(self.corrected_by_class, self.errors_by_class);
        self.m.corrected_signal_bits = self.corrected_by_class[IntensityClass::Signal.index()];
    }

    fn sample(&mut self) {
        let ec_busy: u64 = self.queues[Proc::BobEc as usize]
            .iter()
            .map(|j| match &j.kind {
                JobKind::Correct(b) => b.alice.len() as u64,
                _ => 0,
            })
            .sum();
        self.m.samples.push(Sample {
            time_ms: self.now,
            frames: self.m.frames_sent,
            raw_bits: self.m.raw_bits,
            sifted_bits: self.m.sifted_bits,
            corrected_bits: self.m.corrected_bits,
            sift_queue_bits: self.sift_queue_bits,
            ec_queue_bits: self.ec.len() as u64 + ec_busy,
            compensations: self.m.compensation_events,
            drift_qber: self.drift,
        });
    }

    fn stop(&mut self) {
        self.stopped = true;
        if self.sc.sim.sample_interval_ms > 0.0 {
            self.sample();
        }
    }

    fn start_frame(&mut self) {
        if let RunBudget::Frames(n) = self.budget {
            if self.m.frames_sent as usize >= n {
                self.stop();
                return;
            }
        }
        let work = self.sc.stages.generation_ms;
        self.push_job(Proc::AliceMain, work, JobKind::Generate);
    }

    fn complete(&mut self, proc: Proc) {
        let job = self.queues[proc as usize].pop_front().expect("completing a busy process");
        match job.kind {
            JobKind::Generate => {
                let work = self.sc.stages.transfer_ms;
                self.push_job(Proc::AliceMain, work, JobKind::Transfer);
            }
            JobKind::Transfer => {
                let st = &self.sc.stages;
                let e = self.sc.clock.transmission_ms();
                let frame = self.frame;
                self.transmission_started = true;
                self.deadtime_done = false;
                self.report_arrived = false;
                self.schedule(st.header_ms + st.deadtime_before_ms + e, Event::TransmissionEnd { frame });
            }
            JobKind::AlicePost { frame } => {
                let delay = self.sc.sim.message_delay_ms;
                self.schedule(delay, Event::MaskArrives { frame });
            }
            JobKind::Log => {}
            JobKind::Sift { data, sent_ms } => self.finish_sift(*data, sent_ms),
            JobKind::Correct(block) => self.finish_block(block),
        }
        self.try_start_ec();
        self.check_alice_idle();
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::TransmissionEnd { frame } => self.transmission_end(frame),
            Event::DeadtimeEnd { frame } => {
                self.deadtime_done = true;
                self.waiting_since = Some(self.now);
                self.maybe_alice_post(frame);
                self.check_alice_idle();
            }
            Event::ReportArrives { frame } => {
                self.report_arrived = true;
                self.maybe_alice_post(frame);
                self.check_alice_idle();
            }
            Event::MaskArrives { frame } => {
                if let Some(pos) = self.pending.iter().position(|d| d.0.frame_number == frame) {
                    let (data, sent_ms) = self.pending.remove(pos);
                    let work = self.sc.tasks.sift_ms_per_kbit * data.raw_bits as f64 / 1000.0;
                    self.push_job(Proc::BobSift, work, JobKind::Sift { data: Box::new(data), sent_ms });
                }
            }
            Event::CompensationEnd => {
                self.drift = self.sc.channel.drift.reset_value;
                self.drift_time = self.now;
                self.last_comp_end = self.now;
                self.comp_pending = false;
                self.start_frame();
            }
            Event::Sample => {
                self.sample();
                let dt = self.sc.sim.sample_interval_ms;
                self.schedule(dt, Event::Sample);
            }
            Event::Stop => self.stop(),
        }
    }

    fn transmission_end(&mut self, frame: u32) {
        let e = self.sc.clock.transmission_ms();
        self.m.transmission_time_ms += e;
        self.m.frames_sent += 1;
        self.drift = self.sc.channel.drift.advance(self.drift, (self.now - self.drift_time) / 1000.0, &mut self.drift_rng);
        self.drift_time = self.now;

        let data = detect(self.sc, frame, self.drift, self.seed).expect("scenario validated before the run");
        self.m.raw_bits += data.raw_bits;
        self.sift_queue_bits += data.raw_bits;
        self.pending.push((data, self.now));

        let log = self.sc.tasks.log_ms;
        self.push_job(Proc::BobLog, log, JobKind::Log);
        let delay = self.sc.sim.message_delay_ms;
        self.schedule(delay, Event::ReportArrives { frame });
        let f = self.sc.stages.deadtime_after_ms;
        self.schedule(f, Event::DeadtimeEnd { frame });
    }

    fn maybe_alice_post(&mut self, frame: u32) {
        if !(self.deadtime_done && self.report_arrived && self.transmission_started) {
            return;
        }
        self.transmission_started = false;
        let raw = self.pending.iter().find(|d| d.0.frame_number == frame).map_or(0, |d| d.0.raw_bits);
        let t = &self.sc.tasks;
        let work = t.log_ms + t.alice_frame_ms + t.alice_ms_per_kbit * raw as f64 / 1000.0;
        self.push_job(Proc::AlicePost, work, JobKind::AlicePost { frame });
    }

    /// Ends stage g once Alice has nothing left to run for the current frame.
    fn check_alice_idle(&mut self) {
        let Some(since) = self.waiting_since else { return };
        if self.transmission_started
            || !self.queues[Proc::AlicePost as usize].is_empty()
            || !self.queues[Proc::AliceMain as usize].is_empty()
        {
            return;
        }
        self.waiting_since = None;
        self.m.wait_time_ms += self.now - since;
        self.frame += 1;
        if self.comp_pending {
            let h = self.sc.control.comp_duration_ms;
            self.m.compensation_events += 1;
            self.m.compensation_time_ms += h;
            self.schedule(h, Event::CompensationEnd);
        } else {
            self.start_frame();
        }
    }

    fn finish_sift(&mut self, data: FrameData, sent_ms: f64) {
        self.sift_queue_bits -= data.raw_bits;
        self.m.sifted_bits += data.alice.len() as u64;
        for i in 0..3 {
            self.m.tally.sent[i] += data.sent[i];
        }
        for c in &data.classes {
            self.m.tally.detected[c.index()] += 1;
        }
        self.ec.push(&data, sent_ms);
    }

    fn try_start_ec(&mut self) {
        let n = self.code.n();
        if self.queues[Proc::BobEc as usize].is_empty() && self.ec.len() >= n {
            let block = self.ec.pop(n);
            let work = self.sc.tasks.ec_ms_per_kbit * n as f64 / 1000.0;
            self.push_job(Proc::BobEc, work, JobKind::Correct(block));
        }
    }

    fn finish_block(&mut self, block: Block) {
        self.m.blocks_attempted += 1;
        let syndrome = self.code.parities(&block.alice).expect("block size matches code");
        let result = decode(
            self.code,
            &block.bob,
            &syndrome,
            self.sc.ldpc.qber_prior,
            self.sc.ldpc.max_iterations,
        )
        .expect("block size matches code");
        let ok = result.success && result.corrected == block.alice;
        let too_noisy = if ok {
            let n = block.alice.len() as u64;
            self.m.corrected_bits += n;
            self.m.corrected_errors += result.flipped_positions.len() as u64;
            for c in &block.classes {
                self.corrected_by_class[c.index()] += 1;
            }
            for &p in &result.flipped_positions {
                self.errors_by_class[block.classes[p].index()] += 1;
            }
            result.estimated_qber > self.sc.control.qber_threshold
        } else {
            self.m.blocks_failed += 1;
            true
        };
        if too_noisy && block.oldest_ms >= self.last_comp_end {
            self.comp_pending = true;
        }
    }
}
