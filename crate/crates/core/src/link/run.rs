//! Session drivers: feed a state machine from a transport and from the
//! emulated quantum channel.
//!
//! Both parties derive the frames from the shared scenario seed: Alice to
//! prepare them, Bob to emulate the photons reaching his detectors. Bob's
//! measurement randomness uses its own stream.

use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use super::message::Message;
use super::session::{final_key_digest, AliceSession, BobSession, Counters, Event, Local, Phase, Role, SessionConfig};
use super::transport::{channel_pair, TcpTransport, Transport};
use crate::bits::mix_seed;
use crate::channel::{simulate_frame, SimulationOptions};
use crate::config::Scenario;
use crate::decoy::TallyAnalysis;
use crate::error::{Error, Result};
use crate::framing::{build_frame, QuantumFrame};
use crate::sifting::{collapse_coincidences, DetectionReport};

const FRAME_STREAM: u64 = 0xF7A3E;
const DETECT_STREAM: u64 = 0xB0B;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub role: Role,
    pub key: Vec<u8>,
    pub key_digest: u64,
    pub counters: Counters,
    pub block_size: usize,
    /// Alice only.
    pub analysis: Option<TallyAnalysis>,
}

impl SessionOutcome {
    /// Error rate over the accepted blocks.
    pub fn qber(&self) -> Option<f64> {
        let bits = self.counters.blocks_accepted * self.block_size as u64;
        (bits > 0).then(|| self.counters.corrected_errors as f64 / bits as f64)
    }
}

pub fn quantum_frame(scenario: &Scenario, frame_number: u32) -> QuantumFrame {
    let seed = mix_seed(mix_seed(scenario.seed, FRAME_STREAM), frame_number as u64);
    build_frame(frame_number, &scenario.clock, &scenario.pulses, seed)
}

/// Bob's detections for one frame as it arrives over the emulated channel.
pub fn bob_detections(scenario: &Scenario, frame: &QuantumFrame) -> Result<(DetectionReport, Vec<u8>)> {
    let base = mix_seed(mix_seed(scenario.seed, DETECT_STREAM), frame.frame_number as u64);
    let options = SimulationOptions::new(scenario.clock.clock_rate_hz);
    let events = simulate_frame(frame, &scenario.channel, &scenario.detectors, options, mix_seed(base, 1), 0.0)?;
    let events = collapse_coincidences(&events, mix_seed(base, 2));
    Ok(DetectionReport::from_events(frame.frame_number, &events))
}

fn send_all<T: Transport>(t: &mut T, msgs: Vec<Message>) -> Result<()> {
    msgs.iter().try_for_each(|m| t.send(m))
}

pub fn run_alice<T: Transport>(
    t: &mut T,
    scenario: &Scenario,
    cfg: Arc<SessionConfig>,
    frames: usize,
) -> Result<SessionOutcome> {
    let block_size = cfg.block_size;
    let mut alice = AliceSession::new(cfg.clone());
    for n in 0..frames {
        let frame = quantum_frame(scenario, n as u32);
        send_all(t, alice.step(Event::Local(Local::Transmit(frame)))?)?;
        while alice.phase() != Phase::Idle {
            let msg = t.recv()?;
            send_all(t, alice.step(Event::Inbound(msg))?)?;
        }
    }
    send_all(t, alice.step(Event::Local(Local::Finish))?)?;
    while alice.phase() != Phase::Done {
        let msg = t.recv()?;
        send_all(t, alice.step(Event::Inbound(msg))?)?;
    }
    let key = alice.key().expect("done implies a key").to_vec();
    Ok(SessionOutcome {
        role: Role::Alice,
        key_digest: final_key_digest(&cfg, &key),
        key,
        counters: alice.counters(),
        block_size,
        analysis: alice.analysis().copied(),
    })
}

pub fn run_bob<T: Transport>(t: &mut T, scenario: &Scenario, cfg: Arc<SessionConfig>) -> Result<SessionOutcome> {
    let block_size = cfg.block_size;
    let mut bob = BobSession::new(cfg.clone());
    while bob.phase() != Phase::Done {
        let msg = t.recv()?;
        send_all(t, bob.step(Event::Inbound(msg))?)?;
        if let Some((frame_number, count)) = bob.announced() {
            let frame = quantum_frame(scenario, frame_number);
            if frame.len() != count as usize {
                return Err(Error::ProtocolViolation {
                    phase: Phase::Collecting.to_string(),
                    detail: format!("announced {count} qubits, configured frame has {}", frame.len()),
                });
            }
            let (report, bits) = bob_detections(scenario, &frame)?;
            send_all(t, bob.step(Event::Local(Local::Detected { report, bits }))?)?;
        }
    }
    let key = bob.key().expect("done implies a key").to_vec();
    Ok(SessionOutcome {
        role: Role::Bob,
        key_digest: final_key_digest(&cfg, &key),
        key,
        counters: bob.counters(),
        block_size,
        analysis: None,
    })
}

fn join_pair(
    alice: thread::JoinHandle<Result<SessionOutcome>>,
    bob: thread::JoinHandle<Result<SessionOutcome>>,
) -> Result<(SessionOutcome, SessionOutcome)> {
    let a = alice.join().expect("alice thread panicked");
    let b = bob.join().expect("bob thread panicked");
    Ok((a?, b?))
}

/// Both parties in one process over the in-process transport.
pub fn run_in_process(scenario: &Scenario, frames: usize) -> Result<(SessionOutcome, SessionOutcome)> {
    let cfg = Arc::new(SessionConfig::from_scenario(scenario)?);
    let (mut ta, mut tb) = channel_pair();
    let (sa, sb) = (scenario.clone(), scenario.clone());
    let ca = cfg.clone();
    let alice = thread::spawn(move || run_alice(&mut ta, &sa, ca, frames));
    let bob = thread::spawn(move || run_bob(&mut tb, &sb, cfg));
    join_pair(alice, bob)
}

/// Both parties in one process over a TCP connection on 127.0.0.1.
pub fn run_tcp_loopback(scenario: &Scenario, frames: usize) -> Result<(SessionOutcome, SessionOutcome)> {
    let cfg = Arc::new(SessionConfig::from_scenario(scenario)?);
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let (sa, sb) = (scenario.clone(), scenario.clone());
    let ca = cfg.clone();
    let alice = thread::spawn(move || {
        let (stream, _) = listener.accept()?;
        run_alice(&mut TcpTransport::new(stream)?, &sa, ca, frames)
    });
    let bob = thread::spawn(move || run_bob(&mut TcpTransport::new(TcpStream::connect(addr)?)?, &sb, cfg));
    join_pair(alice, bob)
}
