//! Client and server session state machines.

use super::frame::{Frame, MsgType};
use super::payload::{self, Purpose, ServerKind};
use super::ProtocolError;
use crate::crypto::keys::Registry;
use crate::crypto::{
    decrypt_target, dequantize, derive_session_keys, ecdh_shared, encrypt_target, quantize, Direction, MaskStream,
    MaskedBlob, PublicKey, SecretKey, SessionKeys, DEFAULT_FRAC_BITS,
};
use crate::tensor::Tensor;
use crate::Scalar;
use rand::{CryptoRng, RngCore};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Init,
    AwaitPeerPoint,
    Established,
    Closed,
}

/// `Plain` keeps quantization and signatures but uses a zero mask and
/// sends targets unencrypted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Mode {
    Masked = 0,
    Plain = 1,
}

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub frac_bits: u8,
    pub mode: Mode,
    /// Gradients are clipped to `±grad_clip` before quantization.
    pub grad_clip: f64,
    /// Saturated-element ratio above which a warning is logged.
    pub saturation_warn: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            frac_bits: DEFAULT_FRAC_BITS,
            mode: Mode::Masked,
            grad_clip: 8.0,
            saturation_warn: 1e-3,
        }
    }
}

/// State shared by both roles.
struct Core {
    role: Role,
    phase: Phase,
    cfg: SessionConfig,
    sk: SecretKey,
    peer_pk: Option<PublicKey>,
    session_id: [u8; 16],
    ephemeral: Option<SecretKey>,
    keys: Option<SessionKeys>,
    mask: Option<MaskStream>,
    next_send: u64,
    last_recv: Option<u64>,
}

impl Core {
    fn new(role: Role, sk: SecretKey, peer_pk: Option<PublicKey>, cfg: SessionConfig) -> Self {
        Core {
            role,
            phase: Phase::Init,
            cfg,
            sk,
            peer_pk,
            session_id: [0; 16],
            ephemeral: None,
            keys: None,
            mask: None,
            next_send: 0,
            last_recv: None,
        }
    }

    fn close(&mut self) {
        self.phase = Phase::Closed;
        self.ephemeral = None;
        self.keys = None;
        self.mask = None;
    }

    fn fail(&mut self, e: ProtocolError) -> ProtocolError {
        self.close();
        e
    }

    fn require(&self, phase: Phase, op: &'static str) -> Result<(), ProtocolError> {
        match self.phase {
            Phase::Closed => Err(ProtocolError::Closed),
            p if p == phase => Ok(()),
            p => Err(ProtocolError::WrongPhase { phase: p, op }),
        }
    }

    fn seal(&mut self, t: MsgType, payload: Vec<u8>) -> Frame {
        let c = self.next_send;
        self.next_send += 1;
        Frame::signed(t, self.session_id, c, payload, &self.sk)
    }

    /// Verify-then-accept. Any failure closes the session.
    fn open(&mut self, frame: &Frame, expected: MsgType) -> Result<(), ProtocolError> {
        if self.phase == Phase::Closed {
            return Err(ProtocolError::Closed);
        }
        let res = self.check(frame, expected);
        if let Err(e) = res {
            return Err(self.fail(e));
        }
        self.last_recv = Some(frame.counter);
        Ok(())
    }

    fn check(&self, frame: &Frame, expected: MsgType) -> Result<(), ProtocolError> {
        let pk = self.peer_pk.as_ref().ok_or(ProtocolError::UnknownParty(String::new()))?;
        if frame.session_id != self.session_id {
            return Err(ProtocolError::SessionMismatch);
        }
        if !frame.verify(pk) {
            return Err(ProtocolError::BadSignature(frame.msg_type));
        }
        if frame.msg_type == MsgType::Abort {
            return Err(ProtocolError::PeerAbort(String::from_utf8_lossy(&frame.payload).into_owned()));
        }
        if frame.msg_type != expected {
            return Err(ProtocolError::UnexpectedMessage {
                expected,
                got: frame.msg_type,
            });
        }
        let fresh = match (expected, self.last_recv) {
            (MsgType::ClientHello | MsgType::ServerHello, _) => frame.counter == 0,
            (_, Some(last)) => frame.counter > last,
            (_, None) => false,
        };
        if !fresh {
            return Err(ProtocolError::StaleCounter {
                last: self.last_recv,
                got: frame.counter,
            });
        }
        Ok(())
    }

    fn establish(&mut self, peer_point: &[u8]) -> Result<(), ProtocolError> {
        let q = PublicKey::from_sec1(peer_point)?;
        let d = self.ephemeral.take().expect("ephemeral scalar present before establish");
        let shared = ecdh_shared(&d, &q);
        let keys = derive_session_keys(&shared, &self.session_id);
        self.mask = Some(match self.cfg.mode {
            Mode::Masked => MaskStream::new(&keys.k_mask, &self.session_id),
            Mode::Plain => MaskStream::zero(),
        });
        self.keys = Some(keys);
        self.phase = Phase::Established;
        Ok(())
    }

    fn abort_frame(&mut self, reason: &str) -> Frame {
        let f = self.seal(MsgType::Abort, reason.as_bytes().to_vec());
        self.close();
        f
    }

    fn encode_tensor<T: Scalar>(&self, t: &Tensor<T>, counter: u64, dir: Direction) -> Result<MaskedBlob, ProtocolError> {
        let blob = quantize(t, self.cfg.frac_bits)?;
        if blob.saturation_ratio() > self.cfg.saturation_warn {
            log::warn!(
                "{:?}: {} of {} values saturated at frac_bits {}",
                self.role,
                blob.saturated,
                blob.words.len(),
                self.cfg.frac_bits
            );
        }
        Ok(self.mask.as_ref().expect("established").mask(&blob, counter, dir)?)
    }

    fn decode_tensor<T: Scalar>(&self, m: &MaskedBlob, counter: u64, dir: Direction) -> Result<Tensor<T>, ProtocolError> {
        let blob = self.mask.as_ref().expect("established").demask(m, counter, dir)?;
        Ok(dequantize(&blob)?)
    }
}

/// Message delivered to the server application after verification.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientMessage<T: Scalar> {
    pub purpose: Purpose,
    pub t_mid: Tensor<T>,
    pub target: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ServerMessage<T: Scalar> {
    Gradient(Tensor<T>),
    Scores(Tensor<T>),
}

pub struct ClientSession {
    core: Core,
    party_id: String,
}

impl ClientSession {
    pub fn new(party_id: &str, sk: SecretKey, server_pk: PublicKey, cfg: SessionConfig) -> Self {
        assert!(!party_id.is_empty() && party_id.len() <= 255, "party id must be 1..=255 bytes");
        ClientSession {
            core: Core::new(Role::Client, sk, Some(server_pk), cfg),
            party_id: party_id.to_string(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.core.phase
    }

    pub fn session_id(&self) -> [u8; 16] {
        self.core.session_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.core.cfg
    }

    pub fn session_keys(&self) -> Option<&SessionKeys> {
        self.core.keys.as_ref()
    }

    pub fn has_key_material(&self) -> bool {
        self.core.keys.is_some() || self.core.mask.is_some() || self.core.ephemeral.is_some()
    }

    /// Step 1: fresh session id and ephemeral `d_c`; emits M_CS1.
    pub fn hello<R: RngCore + CryptoRng>(&mut self, rng: &mut R) -> Result<Frame, ProtocolError> {
        self.core.require(Phase::Init, "hello")?;
        rng.fill_bytes(&mut self.core.session_id);
        let d = SecretKey::random(rng);
        let q = d.public_key().to_compressed();
        self.core.ephemeral = Some(d);
        let p = payload::encode_client_hello(&self.party_id, self.core.cfg.mode, &q);
        self.core.phase = Phase::AwaitPeerPoint;
        Ok(self.core.seal(MsgType::ClientHello, p))
    }

    /// Step 2 (client half): verify M_SC1 and derive session keys.
    pub fn receive_hello(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.core.require(Phase::AwaitPeerPoint, "receive_hello")?;
        self.core.open(frame, MsgType::ServerHello)?;
        let q = payload::decode_server_hello(&frame.payload).map_err(|e| self.core.fail(e))?;
        self.core.establish(&q).map_err(|e| self.core.fail(e))
    }

    /// Step 3: M_CS2 carrying masked `t_mid` and the encrypted targets.
    pub fn send_intermediate<T: Scalar>(
        &mut self,
        t_mid: &Tensor<T>,
        target: &[T],
        purpose: Purpose,
    ) -> Result<Frame, ProtocolError> {
        self.core.require(Phase::Established, "send_intermediate")?;
        let counter = self.core.next_send;
        let m1 = self.core.encode_tensor(t_mid, counter, Direction::ClientToServer)?;
        let plain = payload::encode_values(target.iter().map(|v| v.to_f64_lossy()));
        let m2 = match self.core.cfg.mode {
            Mode::Masked => {
                let keys = self.core.keys.as_ref().expect("established");
                encrypt_target(&keys.k_enc, &self.core.session_id, counter, &plain)
            }
            Mode::Plain => plain,
        };
        let p = payload::encode_client_data(purpose, &m1, &m2);
        Ok(self.core.seal(MsgType::ClientData, p))
    }

    /// Step 5 input: verify and unmask M_SC2.
    pub fn receive<T: Scalar>(&mut self, frame: &Frame) -> Result<ServerMessage<T>, ProtocolError> {
        self.core.require(Phase::Established, "receive")?;
        self.core.open(frame, MsgType::ServerData)?;
        let decoded = payload::decode_server_data(&frame.payload).and_then(|(kind, blob)| {
            let t = self.core.decode_tensor(&blob, frame.counter, Direction::ServerToClient)?;
            Ok(match kind {
                ServerKind::Gradient => ServerMessage::Gradient(t),
                ServerKind::Scores => ServerMessage::Scores(t),
            })
        });
        decoded.map_err(|e| self.core.fail(e))
    }

    /// Signed ABORT; closes the session.
    pub fn abort(&mut self, reason: &str) -> Frame {
        self.core.abort_frame(reason)
    }

    pub fn close(&mut self) {
        self.core.close();
    }
}

pub struct ServerSession {
    core: Core,
    registry: Arc<Registry>,
    peer_id: Option<String>,
}

impl ServerSession {
    pub fn new(sk: SecretKey, registry: Arc<Registry>, cfg: SessionConfig) -> Self {
        ServerSession {
            core: Core::new(Role::Server, sk, None, cfg),
            registry,
            peer_id: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.core.phase
    }

    pub fn session_id(&self) -> [u8; 16] {
        self.core.session_id
    }

    pub fn peer_id(&self) -> Option<&str> {
        self.peer_id.as_deref()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.core.cfg
    }

    pub fn session_keys(&self) -> Option<&SessionKeys> {
        self.core.keys.as_ref()
    }

    pub fn has_key_material(&self) -> bool {
        self.core.keys.is_some() || self.core.mask.is_some() || self.core.ephemeral.is_some()
    }

    /// Step 2: verify M_CS1 against the registry, derive keys, emit M_SC1.
    pub fn respond<R: RngCore + CryptoRng>(&mut self, frame: &Frame, rng: &mut R) -> Result<Frame, ProtocolError> {
        self.core.require(Phase::Init, "respond")?;
        let res = self.respond_inner(frame, rng);
        res.map_err(|e| self.core.fail(e))
    }

    fn respond_inner<R: RngCore + CryptoRng>(&mut self, frame: &Frame, rng: &mut R) -> Result<Frame, ProtocolError> {
        if frame.msg_type != MsgType::ClientHello {
            return Err(ProtocolError::UnexpectedMessage {
                expected: MsgType::ClientHello,
                got: frame.msg_type,
            });
        }
        let (id, mode, q_c) = payload::decode_client_hello(&frame.payload)?;
        let pk = *self.registry.get(&id).ok_or_else(|| ProtocolError::UnknownParty(id.clone()))?;
        if mode != self.core.cfg.mode {
            return Err(ProtocolError::ModeMismatch);
        }
        self.core.peer_pk = Some(pk);
        self.core.session_id = frame.session_id;
        self.core.check(frame, MsgType::ClientHello)?;
        self.core.last_recv = Some(frame.counter);
        self.peer_id = Some(id);
        let d = SecretKey::random(rng);
        let q_s = d.public_key().to_compressed();
        self.core.ephemeral = Some(d);
        self.core.establish(&q_c)?;
        Ok(self.core.seal(MsgType::ServerHello, q_s.to_vec()))
    }

    /// Step 3 (server half): verify M_CS2, unmask `T_Mid`, decrypt targets.
    pub fn receive<T: Scalar>(&mut self, frame: &Frame) -> Result<ClientMessage<T>, ProtocolError> {
        self.core.require(Phase::Established, "receive")?;
        self.core.open(frame, MsgType::ClientData)?;
        let decoded = payload::decode_client_data(&frame.payload).and_then(|(purpose, blob, m2)| {
            let t_mid = self.core.decode_tensor(&blob, frame.counter, Direction::ClientToServer)?;
            let plain = match self.core.cfg.mode {
                Mode::Masked => {
                    let keys = self.core.keys.as_ref().expect("established");
                    decrypt_target(&keys.k_enc, &self.core.session_id, frame.counter, &m2)
                }
                Mode::Plain => m2,
            };
            let target = payload::decode_values(&plain)?.into_iter().map(T::of).collect();
            Ok(ClientMessage { purpose, t_mid, target })
        });
        decoded.map_err(|e| self.core.fail(e))
    }

    /// Step 4: clipped, quantized, masked `T_Back` as M_SC2.
    pub fn send_gradient<T: Scalar>(&mut self, t_back: &Tensor<T>) -> Result<Frame, ProtocolError> {
        let c = T::of(self.core.cfg.grad_clip);
        let clipped = t_back.map(|v| v.max(-c).min(c));
        self.send(ServerKind::Gradient, &clipped)
    }

    pub fn send_scores<T: Scalar>(&mut self, scores: &Tensor<T>) -> Result<Frame, ProtocolError> {
        self.send(ServerKind::Scores, scores)
    }

    fn send<T: Scalar>(&mut self, kind: ServerKind, t: &Tensor<T>) -> Result<Frame, ProtocolError> {
        self.core.require(Phase::Established, "send")?;
        let counter = self.core.next_send;
        let m = self.core.encode_tensor(t, counter, Direction::ServerToClient)?;
        Ok(self.core.seal(MsgType::ServerData, payload::encode_server_data(kind, &m)))
    }

    pub fn abort(&mut self, reason: &str) -> Frame {
        self.core.abort_frame(reason)
    }

    pub fn close(&mut self) {
        self.core.close();
    }
}
