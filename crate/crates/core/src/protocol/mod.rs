//! Wire format and the client/server state machines of the secure
//! split-learning exchange.
//!
//! ```text
//! client                                   server
//!   M_CS1  id, mode, Q_c        σ_c ─────▶  verify, d_s, keys = KDF(d_s·Q_c)
//!          keys = KDF(d_c·Q_s)  ◀───── σ_s  M_SC1  Q_s
//!   M_CS2  T_Mid + Mask₁, Enc(target) ───▶  demask, decrypt
//!          demask               ◀─────────  M_SC2  T_Back + Mask₂
//! ```

pub mod frame;
pub mod payload;
pub mod session;
pub mod transport;

pub use frame::{Frame, FrameError, MsgType};
pub use payload::{Purpose, ServerKind};
pub use session::{ClientMessage, ClientSession, Mode, Phase, Role, ServerMessage, ServerSession, SessionConfig};
pub use transport::{Loopback, Tap, TcpTransport, Transport};

use crate::crypto::CryptoError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("frame: {0}")]
    Frame(#[from] FrameError),
    #[error("signature on {0:?} did not verify")]
    BadSignature(MsgType),
    #[error("operation {op} not allowed in phase {phase:?}")]
    WrongPhase { phase: Phase, op: &'static str },
    #[error("expected {expected:?}, got {got:?}")]
    UnexpectedMessage { expected: MsgType, got: MsgType },
    #[error("frame belongs to another session")]
    SessionMismatch,
    #[error("counter {got} not fresh (last {last:?})")]
    StaleCounter { last: Option<u64>, got: u64 },
    #[error("party {0:?} is not registered")]
    UnknownParty(String),
    #[error("peer requested a different protection mode")]
    ModeMismatch,
    #[error("payload: {0}")]
    Payload(String),
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
    #[error("peer aborted: {0}")]
    PeerAbort(String),
    #[error("session closed")]
    Closed,
    #[error("transport: {0}")]
    Io(String),
}
