//! Frame transports: an in-process loopback pair and length-prefixed TCP.

use super::frame::{Frame, MAX_PAYLOAD};
use super::ProtocolError;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

pub const MAX_FRAME: usize = MAX_PAYLOAD + 1024;

pub trait Transport {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), ProtocolError>;
    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError>;

    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.send_bytes(&frame.encode())
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        Ok(Frame::decode(&self.recv_bytes()?)?)
    }
}

/// Everything sent through a tapped loopback, in order.
pub type Tap = Arc<Mutex<Vec<Vec<u8>>>>;

pub struct Loopback {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    tap: Option<Tap>,
}

impl Loopback {
    pub fn pair() -> (Loopback, Loopback) {
        let (a_tx, b_rx) = channel();
        let (b_tx, a_rx) = channel();
        (
            Loopback {
                tx: a_tx,
                rx: a_rx,
                tap: None,
            },
            Loopback {
                tx: b_tx,
                rx: b_rx,
                tap: None,
            },
        )
    }

    /// A pair whose traffic in both directions is also copied to the tap.
    pub fn tapped_pair() -> (Loopback, Loopback, Tap) {
        let tap: Tap = Arc::default();
        let (mut a, mut b) = Self::pair();
        a.tap = Some(tap.clone());
        b.tap = Some(tap.clone());
        (a, b, tap)
    }
}

impl Transport for Loopback {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), ProtocolError> {
        if let Some(tap) = &self.tap {
            tap.lock().expect("tap lock").push(bytes.to_vec());
        }
        self.tx.send(bytes.to_vec()).map_err(|_| ProtocolError::Io("loopback peer dropped".into()))
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        self.rx.recv().map_err(|_| ProtocolError::Io("loopback peer dropped".into()))
    }
}

/// `u32` little-endian length prefix followed by one encoded frame.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Self {
        let _ = stream.set_nodelay(true);
        TcpTransport { stream }
    }
}

fn io(e: std::io::Error) -> ProtocolError {
    ProtocolError::Io(e.to_string())
}

impl Transport for TcpTransport {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), ProtocolError> {
        self.stream.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io)?;
        self.stream.write_all(bytes).map_err(io)?;
        self.stream.flush().map_err(io)
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        let mut len = [0u8; 4];
        self.stream.read_exact(&mut len).map_err(io)?;
        let n = u32::from_le_bytes(len) as usize;
        if n > MAX_FRAME {
            return Err(ProtocolError::Io(format!("frame of {n} bytes exceeds limit")));
        }
        let mut buf = vec![0u8; n];
        self.stream.read_exact(&mut buf).map_err(io)?;
        Ok(buf)
    }
}
