//! Length-prefixed binary messages: `[tag:1][len:4 LE][payload]`, all
//! integers little-endian, bitmaps packed LSB-first.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Largest payload accepted from a stream.
pub const MAX_PAYLOAD: usize = 1 << 28;

const HEADER_LEN: usize = 5;

pub mod tag {
    pub const FRAME_ANNOUNCE: u8 = 0x01;
    pub const DETECTION_REPORT: u8 = 0x02;
    pub const SIFT_MASK: u8 = 0x03;
    pub const SYNDROME: u8 = 0x04;
    pub const VERIFY: u8 = 0x05;
    pub const PA_SEED: u8 = 0x06;
    pub const KEY_CONFIRM: u8 = 0x07;
    pub const SYNDROME_REQUEST: u8 = 0x08;
    pub const BLOCK_RESULT: u8 = 0x09;
    pub const DECOY_ANNOUNCE: u8 = 0x0A;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    FrameAnnounce { frame_number: u32, qubit_count: u32 },
    /// Bob's clicks: `(pulse_index, basis)` per entry.
    DetectionReport { frame_number: u32, entries: Vec<(u32, u8)> },
    SiftMask { frame_number: u32, bitmap: Vec<u8> },
    Syndrome { block_id: u32, code_id: u32, parity: Vec<u8> },
    Verify { block_id: u32, digest: u64 },
    /// Toeplitz seed bits packed into `seed`.
    PaSeed { n_in: u32, n_out: u32, seed: Vec<u8> },
    KeyConfirm { digest: u64 },
    SyndromeRequest { block_id: u32 },
    /// Bob's verdict on a block and, when accepted, the positions he corrected.
    BlockResult { block_id: u32, accepted: bool, error_positions: Vec<u32> },
    /// One flag per corrected key bit, set for signal-intensity bits.
    DecoyAnnounce { bit_count: u32, bitmap: Vec<u8> },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::FrameAnnounce { .. } => tag::FRAME_ANNOUNCE,
            Message::DetectionReport { .. } => tag::DETECTION_REPORT,
            Message::SiftMask { .. } => tag::SIFT_MASK,
            Message::Syndrome { .. } => tag::SYNDROME,
            Message::Verify { .. } => tag::VERIFY,
            Message::PaSeed { .. } => tag::PA_SEED,
            Message::KeyConfirm { .. } => tag::KEY_CONFIRM,
            Message::SyndromeRequest { .. } => tag::SYNDROME_REQUEST,
            Message::BlockResult { .. } => tag::BLOCK_RESULT,
            Message::DecoyAnnounce { .. } => tag::DECOY_ANNOUNCE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::FrameAnnounce { .. } => "FRAME_ANNOUNCE",
            Message::DetectionReport { .. } => "DETECTION_REPORT",
            Message::SiftMask { .. } => "SIFT_MASK",
            Message::Syndrome { .. } => "SYNDROME",
            Message::Verify { .. } => "VERIFY",
            Message::PaSeed { .. } => "PA_SEED",
            Message::KeyConfirm { .. } => "KEY_CONFIRM",
            Message::SyndromeRequest { .. } => "SYNDROME_REQUEST",
            Message::BlockResult { .. } => "BLOCK_RESULT",
            Message::DecoyAnnounce { .. } => "DECOY_ANNOUNCE",
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut p = Vec::new();
        let u32le = |p: &mut Vec<u8>, v: u32| p.extend_from_slice(&v.to_le_bytes());
        match self {
            Message::FrameAnnounce { frame_number, qubit_count } => {
                u32le(&mut p, *frame_number);
                u32le(&mut p, *qubit_count);
            }
            Message::DetectionReport { frame_number, entries } => {
                u32le(&mut p, *frame_number);
                u32le(&mut p, entries.len() as u32);
                p.reserve(entries.len() * 5);
                for &(idx, basis) in entries {
                    u32le(&mut p, idx);
                    p.push(basis);
                }
            }
            Message::SiftMask { frame_number, bitmap } => {
                u32le(&mut p, *frame_number);
                p.extend_from_slice(bitmap);
            }
            Message::Syndrome { block_id, code_id, parity } => {
                u32le(&mut p, *block_id);
                u32le(&mut p, *code_id);
                p.extend_from_slice(parity);
            }
            Message::Verify { block_id, digest } => {
                u32le(&mut p, *block_id);
                p.extend_from_slice(&digest.to_le_bytes());
            }
            Message::PaSeed { n_in, n_out, seed } => {
                u32le(&mut p, *n_in);
                u32le(&mut p, *n_out);
                p.extend_from_slice(seed);
            }
            Message::KeyConfirm { digest } => p.extend_from_slice(&digest.to_le_bytes()),
            Message::SyndromeRequest { block_id } => u32le(&mut p, *block_id),
            Message::BlockResult { block_id, accepted, error_positions } => {
                u32le(&mut p, *block_id);
                p.push(*accepted as u8);
                u32le(&mut p, error_positions.len() as u32);
                for &pos in error_positions {
                    u32le(&mut p, pos);
                }
            }
            Message::DecoyAnnounce { bit_count, bitmap } => {
                u32le(&mut p, *bit_count);
                p.extend_from_slice(bitmap);
            }
        }
        p
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.push(self.tag());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes exactly one message occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Message> {
        let (&t, rest) = bytes.split_first().ok_or_else(|| Error::Framing("empty input".into()))?;
        check_tag(t)?;
        if rest.len() < 4 {
            return Err(Error::Framing(format!("header truncated at {} bytes", bytes.len())));
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let payload = &rest[4..];
        if payload.len() != len {
            return Err(Error::Framing(format!("declared {len} payload bytes, found {}", payload.len())));
        }
        parse_payload(t, payload)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    /// Reads one message from a byte stream.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Message> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header).map_err(truncation)?;
        check_tag(header[0])?;
        let len = u32::from_le_bytes(header[1..].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(Error::Framing(format!("payload of {len} bytes exceeds the limit")));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload).map_err(truncation)?;
        parse_payload(header[0], &payload)
    }
}

fn truncation(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Framing("stream ended inside a message".into())
    } else {
        Error::Io(e)
    }
}

fn check_tag(t: u8) -> Result<()> {
    if (tag::FRAME_ANNOUNCE..=tag::DECOY_ANNOUNCE).contains(&t) {
        Ok(())
    } else {
        Err(Error::Protocol(format!("unknown message tag 0x{t:02X}")))
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Framing(format!("{} payload truncated", self.what)));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn rest(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf).to_vec()
    }

    fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Framing(format!("{} trailing bytes in {} payload", self.buf.len(), self.what)))
        }
    }
}

fn parse_payload(t: u8, payload: &[u8]) -> Result<Message> {
    let mut c = Cursor { buf: payload, what: "message" };
    let msg = match t {
        tag::FRAME_ANNOUNCE => {
            c.what = "FRAME_ANNOUNCE";
            Message::FrameAnnounce { frame_number: c.u32()?, qubit_count: c.u32()? }
        }
        tag::DETECTION_REPORT => {
            c.what = "DETECTION_REPORT";
            let frame_number = c.u32()?;
            let count = c.u32()? as usize;
            if c.buf.len() != count * 5 {
                return Err(Error::Framing(format!(
                    "DETECTION_REPORT declares {count} entries but carries {} bytes",
                    c.buf.len()
                )));
            }
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                entries.push((c.u32()?, c.u8()?));
            }
            Message::DetectionReport { frame_number, entries }
        }
        tag::SIFT_MASK => {
            c.what = "SIFT_MASK";
            Message::SiftMask { frame_number: c.u32()?, bitmap: c.rest() }
        }
        tag::SYNDROME => {
            c.what = "SYNDROME";
            Message::Syndrome { block_id: c.u32()?, code_id: c.u32()?, parity: c.rest() }
        }
        tag::VERIFY => {
            c.what = "VERIFY";
            Message::Verify { block_id: c.u32()?, digest: c.u64()? }
        }
        tag::PA_SEED => {
            c.what = "PA_SEED";
            Message::PaSeed { n_in: c.u32()?, n_out: c.u32()?, seed: c.rest() }
        }
        tag::KEY_CONFIRM => {
            c.what = "KEY_CONFIRM";
            Message::KeyConfirm { digest: c.u64()? }
        }
        tag::SYNDROME_REQUEST => {
            c.what = "SYNDROME_REQUEST";
            Message::SyndromeRequest { block_id: c.u32()? }
        }
        tag::BLOCK_RESULT => {
            c.what = "BLOCK_RESULT";
            let block_id = c.u32()?;
            let accepted = match c.u8()? {
                0 => false,
                1 => true,
                v => return Err(Error::Framing(format!("BLOCK_RESULT accepted flag {v}"))),
            };
            let count = c.u32()? as usize;
            if c.buf.len() != count * 4 {
                return Err(Error::Framing(format!("BLOCK_RESULT declares {count} positions")));
            }
            let error_positions = (0..count).map(|_| c.u32()).collect::<Result<_>>()?;
            Message::BlockResult { block_id, accepted, error_positions }
        }
        tag::DECOY_ANNOUNCE => {
            c.what = "DECOY_ANNOUNCE";
            let bit_count = c.u32()?;
            let bitmap = c.rest();
            if bitmap.len() != (bit_count as usize).div_ceil(8) {
                return Err(Error::Framing(format!("DECOY_ANNOUNCE bitmap of {} bytes for {bit_count} bits", bitmap.len())));
            }
            Message::DecoyAnnounce { bit_count, bitmap }
        }
        _ => unreachable!("tag checked"),
    };
    c.finish()?;
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_announce_layout() {
        let bytes = Message::FrameAnnounce { frame_number: 7, qubit_count: 16 }.encode();
        assert_eq!(bytes, [0x01, 0x08, 0, 0, 0, 0x07, 0, 0, 0, 0x10, 0, 0, 0]);
    }

    #[test]
    fn unknown_tag_is_a_protocol_error() {
        assert!(matches!(Message::decode(&[0xFF, 0, 0, 0, 0]), Err(Error::Protocol(_))));
        assert!(matches!(Message::decode(&[0x00, 0, 0, 0, 0]), Err(Error::Protocol(_))));
    }

    #[test]
    fn truncation_is_a_framing_error() {
        let bytes = Message::Verify { block_id: 3, digest: 99 }.encode();
        for cut in 1..bytes.len() {
            assert!(matches!(Message::decode(&bytes[..cut]), Err(Error::Framing(_))), "cut {cut}");
        }
        let mut short = bytes.clone();
        short[1] = 4;
        short.truncate(9);
        assert!(matches!(Message::decode(&short), Err(Error::Framing(_))));
        assert!(matches!(Message::read_from(&mut &bytes[..7]), Err(Error::Framing(_))));
    }

    #[test]
    fn report_entry_count_must_match() {
        let mut bytes = Message::DetectionReport { frame_number: 1, entries: vec![(4, 1), (9, 0)] }.encode();
        bytes[9] = 3;
        assert!(matches!(Message::decode(&bytes), Err(Error::Framing(_))));
    }

    #[test]
    fn stream_reads_back_to_back_messages() {
        let msgs = vec![
            Message::SyndromeRequest { block_id: 2 },
            Message::KeyConfirm { digest: u64::MAX },
            Message::SiftMask { frame_number: 0, bitmap: vec![] },
        ];
        let mut wire = Vec::new();
        for m in &msgs {
            m.write_to(&mut wire).unwrap();
        }
        let mut r = &wire[..];
        let back: Vec<_> = (0..3).map(|_| Message::read_from(&mut r).unwrap()).collect();
        assert_eq!(back, msgs);
        assert!(r.is_empty());
    }
}
