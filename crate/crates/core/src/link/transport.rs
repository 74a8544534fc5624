use std::io::{BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};

use super::message::Message;
use crate::error::{Error, Result};

/// A reliable, ordered message pipe.
pub trait Transport {
    fn send(&mut self, msg: &Message) -> Result<()>;
    fn recv(&mut self) -> Result<Message>;
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(TcpTransport { reader, writer: BufWriter::new(stream) })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &Message) -> Result<()> {
        msg.write_to(&mut self.writer)?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        Message::read_from(&mut self.reader)
    }
}

/// In-process transport; messages cross as encoded bytes.
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process endpoints.
pub fn channel_pair() -> (ChannelTransport, ChannelTransport) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (ChannelTransport { tx: a_tx, rx: a_rx }, ChannelTransport { tx: b_tx, rx: b_rx })
}

impl Transport for ChannelTransport {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.tx.send(msg.encode()).map_err(|_| Error::Protocol("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<Message> {
        let bytes = self.rx.recv().map_err(|_| Error::Protocol("peer hung up".into()))?;
        Message::decode(&bytes)
    }
}

/// Records every message that crosses it, for transcript replay.
pub struct Recording<T> {
    inner: T,
    pub sent: Vec<Message>,
    pub received: Vec<Message>,
}

impl<T> Recording<T> {
    pub fn new(inner: T) -> Self {
        Recording { inner, sent: Vec::new(), received: Vec::new() }
    }
}

impl<T: Transport> Transport for Recording<T> {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.sent.push(msg.clone());
        self.inner.send(msg)
    }

    fn recv(&mut self) -> Result<Message> {
        let m = self.inner.recv()?;
        self.received.push(m.clone());
        Ok(m)
    }
}
