//! Signed wire frames.
//!
//! ```text
//! "SGSL" | version u8 | msg_type u8 | session_id [16] | counter u64 LE
//!        | payload_len u32 LE | payload | sig_len u16 LE | signature
//! ```
//! The signature covers `SHA-256` of every byte before `sig_len`.

use crate::crypto::{sha256, sign, verify, PublicKey, SecretKey};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SGSL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 1 + 16 + 8 + 4;
pub const MAX_PAYLOAD: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    /// M_CS1: client party id, mode and ephemeral point.
    ClientHello = 0x01,
    /// M_SC1: server ephemeral point.
    ServerHello = 0x02,
    /// M_CS2: masked intermediate activations and encrypted targets.
    ClientData = 0x03,
    /// M_SC2: masked cut-layer gradient or scores.
    ServerData = 0x04,
    Abort = 0x05,
}

impl TryFrom<u8> for MsgType {
    type Error = FrameError;

    fn try_from(v: u8) -> Result<Self, FrameError> {
        Ok(match v {
            0x01 => MsgType::ClientHello,
            0x02 => MsgType::ServerHello,
            0x03 => MsgType::ClientData,
            0x04 => MsgType::ServerData,
            0x05 => MsgType::Abort,
            other => return Err(FrameError::MsgType(other)),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("unknown message type {0:#04x}")]
    MsgType(u8),
    #[error("payload length {0} exceeds limit")]
    PayloadTooLarge(usize),
    #[error("{0} trailing bytes after signature")]
    Trailing(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub session_id: [u8; 16],
    pub counter: u64,
    pub payload: Vec<u8>,
    pub signature: Vec<u8>,
}

impl Frame {
    pub fn signed(msg_type: MsgType, session_id: [u8; 16], counter: u64, payload: Vec<u8>, sk: &SecretKey) -> Self {
        let mut f = Frame {
            msg_type,
            session_id,
            counter,
            payload,
            signature: Vec::new(),
        };
        f.signature = sign(sk, &f.digest()).0.to_vec();
        f
    }

    fn write_authenticated(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.session_id);
        out.extend_from_slice(&self.counter.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.payload.len());
        self.write_authenticated(&mut buf);
        sha256(&[&buf])
    }

    pub fn verify(&self, pk: &PublicKey) -> bool {
        verify(pk, &self.digest(), &self.signature)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() + 2 + self.signature.len());
        self.write_authenticated(&mut out);
        out.extend_from_slice(&(self.signature.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.signature);
        out
    }

    /// Parses exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Frame, FrameError> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(FrameError::Truncated {
                    needed: n,
                    have: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(4)?;
        if &bytes[..4] != MAGIC {
            return Err(FrameError::Magic);
        }
        need(HEADER_LEN)?;
        if bytes[4] != VERSION {
            return Err(FrameError::Version(bytes[4]));
        }
        let msg_type = MsgType::try_from(bytes[5])?;
        let session_id: [u8; 16] = bytes[6..22].try_into().expect("16 bytes");
        let counter = u64::from_le_bytes(bytes[22..30].try_into().expect("8 bytes"));
        let payload_len = u32::from_le_bytes(bytes[30..34].try_into().expect("4 bytes")) as usize;
        if payload_len > MAX_PAYLOAD {
            return Err(FrameError::PayloadTooLarge(payload_len));
        }
        let sig_at = HEADER_LEN + payload_len;
        need(sig_at + 2)?;
        let sig_len = u16::from_le_bytes(bytes[sig_at..sig_at + 2].try_into().expect("2 bytes")) as usize;
        let end = sig_at + 2 + sig_len;
        need(end)?;
        if bytes.len() > end {
            return Err(FrameError::Trailing(bytes.len() - end));
        }
        Ok(Frame {
            msg_type,
            session_id,
            counter,
            payload: bytes[HEADER_LEN..sig_at].to_vec(),
            signature: bytes[sig_at + 2..end].to_vec(),
        })
    }
}
