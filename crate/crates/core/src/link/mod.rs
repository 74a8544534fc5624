//! Classical channel between Alice and Bob: wire messages, session state
//! machines, transports and session drivers.

pub mod message;
pub mod run;
pub mod session;
pub mod transport;

pub use message::Message;
pub use run::{run_alice, run_bob, run_in_process, run_tcp_loopback, SessionOutcome};
pub use session::{AliceSession, BobSession, Counters, Event, Local, Phase, Role, SessionConfig};
pub use transport::{channel_pair, ChannelTransport, Recording, TcpTransport, Transport};
