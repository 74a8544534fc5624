pub mod bits;
pub mod channel;
pub mod config;
pub mod decoy;
pub mod error;
pub mod framing;
pub mod ldpc;
pub mod link;
pub mod privacy;
pub mod report;
pub mod sifting;
pub mod sim;

pub use error::{Error, Result};
