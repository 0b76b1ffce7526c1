//! The two parties of a split training run.
//!
//! The client owns the encoder and the raw windows; the server owns the
//! decoder, the discriminator and both losses. Only `T_Mid`, the targets and
//! `∂L/∂T_Mid` cross the wire.

use super::SplitError;
use crate::model::gan::discriminator_grads;
use crate::model::{
    decode, encode, generator_objective, score_predictions, write_checkpoint, Bound, ModelConfig, Optimizer, ParamSet,
    StepRecord, TrainConfig,
};
use crate::protocol::{
    ClientSession, Phase, ProtocolError, Purpose, ServerMessage, ServerSession, Transport,
};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};
use rand::{CryptoRng, RngCore};

struct Pending<T> {
    tape: Tape<T>,
    bound: Bound,
    mid: Var,
}

pub struct ClientNode<T: Scalar> {
    pub session: ClientSession,
    config: ModelConfig,
    enc: ParamSet<T>,
    opt: Optimizer<T>,
    pending: Option<Pending<T>>,
    steps: u64,
}

/// Sends a best-effort ABORT for local failures, then hands the error back.
fn abort_on<Tr: Transport>(tr: &mut Tr, frame: Option<crate::protocol::Frame>, e: SplitError) -> SplitError {
    if let Some(f) = frame {
        let _ = tr.send(&f);
    }
    e
}

fn is_peer_abort(e: &ProtocolError) -> bool {
    matches!(e, ProtocolError::PeerAbort(_) | ProtocolError::Io(_))
}

impl<T: Scalar> ClientNode<T> {
    pub fn new(session: ClientSession, config: ModelConfig, enc: ParamSet<T>, train: &TrainConfig) -> Self {
        ClientNode {
            session,
            config,
            enc,
            opt: train.optimizer(),
            pending: None,
            steps: 0,
        }
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.enc
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn start_handshake<Tr: Transport, R: RngCore + CryptoRng>(
        &mut self,
        tr: &mut Tr,
        rng: &mut R,
    ) -> Result<(), SplitError> {
        let hello = self.session.hello(rng)?;
        tr.send(&hello)?;
        Ok(())
    }

    pub fn finish_handshake<Tr: Transport>(&mut self, tr: &mut Tr) -> Result<(), SplitError> {
        let reply = tr.recv();
        let res = reply.and_then(|f| self.session.receive_hello(&f));
        res.map_err(|e| self.fail(tr, e))
    }

    /// Both handshake halves; the server must be running elsewhere.
    pub fn handshake<Tr: Transport, R: RngCore + CryptoRng>(&mut self, tr: &mut Tr, rng: &mut R) -> Result<(), SplitError> {
        self.start_handshake(tr, rng)?;
        self.finish_handshake(tr)
    }

    fn fail<Tr: Transport>(&mut self, tr: &mut Tr, e: ProtocolError) -> SplitError {
        self.pending = None;
        let frame = (!is_peer_abort(&e)).then(|| self.session.abort(&e.to_string()));
        abort_on(tr, frame, e.into())
    }

    /// Encodes `x`, sends `T_Mid` with the targets `y: [batch, 1]`.
    pub fn send_train<Tr: Transport>(&mut self, tr: &mut Tr, x: &Tensor<T>, y: &Tensor<T>) -> Result<(), SplitError> {
        let mut tape = Tape::new();
        let bound = self.enc.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let mid = encode(&mut tape, &bound, &self.config, xv)?;
        let frame = self.session.send_intermediate(tape.value(mid), y.data(), Purpose::Train);
        let frame = frame.map_err(|e| self.fail(tr, e))?;
        tr.send(&frame).map_err(|e| self.fail(tr, e))?;
        self.pending = Some(Pending { tape, bound, mid });
        Ok(())
    }

    /// Receives `∂L/∂T_Mid`, backpropagates it through the encoder and steps.
    pub fn finish_train<Tr: Transport>(&mut self, tr: &mut Tr) -> Result<(), SplitError> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| SplitError::Config("finish_train without a pending step".into()))?;
        let msg = tr.recv().and_then(|f| self.session.receive::<T>(&f));
        let back = match msg.map_err(|e| self.fail(tr, e))? {
            ServerMessage::Gradient(g) => g,
            ServerMessage::Scores(_) => {
                let e = ProtocolError::Payload("expected a gradient, got scores".into());
                return Err(self.fail(tr, e));
            }
        };
        if back.shape() != pending.tape.shape(pending.mid) {
            let e = ProtocolError::Payload(format!("gradient shape {:?} does not match T_Mid", back.shape()));
            return Err(self.fail(tr, e));
        }
        let grads = pending.tape.backward_with(pending.mid, back)?;
        let g = Optimizer::collect(&self.enc, &pending.bound, &grads);
        self.opt.apply(&mut self.enc, &g);
        self.steps += 1;
        Ok(())
    }

    pub fn train_step<Tr: Transport>(&mut self, tr: &mut Tr, x: &Tensor<T>, y: &Tensor<T>) -> Result<(), SplitError> {
        self.send_train(tr, x, y)?;
        self.finish_train(tr)
    }

    pub fn send_score<Tr: Transport>(&mut self, tr: &mut Tr, x: &Tensor<T>, y: &Tensor<T>) -> Result<(), SplitError> {
        let mut tape = Tape::new();
        let bound = self.enc.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let mid = encode(&mut tape, &bound, &self.config, xv)?;
        let frame = self.session.send_intermediate(tape.value(mid), y.data(), Purpose::Score);
        let frame = frame.map_err(|e| self.fail(tr, e))?;
        tr.send(&frame).map_err(|e| self.fail(tr, e))
    }

    pub fn finish_score<Tr: Transport>(&mut self, tr: &mut Tr) -> Result<Vec<T>, SplitError> {
        let msg = tr.recv().and_then(|f| self.session.receive::<T>(&f));
        match msg.map_err(|e| self.fail(tr, e))? {
            ServerMessage::Scores(s) => Ok(s.into_data()),
            ServerMessage::Gradient(_) => Err(self.fail(tr, ProtocolError::Payload("expected scores".into()))),
        }
    }

    /// Anomaly scores for a batch; the server must be running elsewhere.
    pub fn score<Tr: Transport>(&mut self, tr: &mut Tr, x: &Tensor<T>, y: &Tensor<T>) -> Result<Vec<T>, SplitError> {
        self.send_score(tr, x, y)?;
        self.finish_score(tr)
    }

    /// Encoder parameters only.
    pub fn checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(&mut out, &[&self.enc]).expect("in-memory write");
        out
    }
}

/// What one inbound frame did on the server.
#[derive(Clone, Debug, PartialEq)]
pub enum ServerEvent {
    Established(String),
    Trained(StepRecord),
    Scored(usize),
}

pub struct ServerNode<T: Scalar> {
    pub session: ServerSession,
    config: ModelConfig,
    train: TrainConfig,
    dec: ParamSet<T>,
    dis: ParamSet<T>,
    dec_opt: Optimizer<T>,
    dis_opt: Optimizer<T>,
    log: Vec<StepRecord>,
}

impl<T: Scalar> ServerNode<T> {
    pub fn new(session: ServerSession, config: ModelConfig, dec: ParamSet<T>, dis: ParamSet<T>, train: TrainConfig) -> Self {
        ServerNode {
            session,
            config,
            dec_opt: train.optimizer(),
            dis_opt: train.optimizer(),
            train,
            dec,
            dis,
            log: Vec::new(),
        }
    }

    pub fn decoder(&self) -> &ParamSet<T> {
        &self.dec
    }

    pub fn discriminator(&self) -> &ParamSet<T> {
        &self.dis
    }

    pub fn losses(&self) -> &[StepRecord] {
        &self.log
    }

    /// Decoder and discriminator parameters only.
    pub fn checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(&mut out, &[&self.dec, &self.dis]).expect("in-memory write");
        out
    }

    /// Receives and answers one frame.
    pub fn handle<Tr: Transport, R: RngCore + CryptoRng>(&mut self, tr: &mut Tr, rng: &mut R) -> Result<ServerEvent, SplitError> {
        let frame = tr.recv()?;
        if self.session.phase() == Phase::Init {
            let reply = self.session.respond(&frame, rng).map_err(|e| self.fail(tr, e))?;
            tr.send(&reply)?;
            return Ok(ServerEvent::Established(self.session.peer_id().unwrap_or_default().to_string()));
        }
        let msg = self.session.receive::<T>(&frame).map_err(|e| self.fail(tr, e))?;
        let batch = msg.t_mid.shape().first().copied().unwrap_or(0);
        if msg.t_mid.rank() != 3 || msg.target.len() != batch {
            let e = ProtocolError::Payload(format!(
                "T_Mid shape {:?} with {} targets",
                msg.t_mid.shape(),
                msg.target.len()
            ));
            return Err(self.fail(tr, e));
        }
        let y = Tensor::new(&[batch, 1], msg.target)?;
        match msg.purpose {
            Purpose::Train => {
                let (record, back) = self.train_on(msg.t_mid, &y).map_err(|e| self.fail_local(tr, e))?;
                let reply = self.session.send_gradient(&back).map_err(|e| self.fail(tr, e))?;
                tr.send(&reply)?;
                Ok(ServerEvent::Trained(record))
            }
            Purpose::Score => {
                let scores = self.score_on(msg.t_mid, &y).map_err(|e| self.fail_local(tr, e))?;
                let reply = self.session.send_scores(&scores).map_err(|e| self.fail(tr, e))?;
                tr.send(&reply)?;
                Ok(ServerEvent::Scored(batch))
            }
        }
    }

    fn fail<Tr: Transport>(&mut self, tr: &mut Tr, e: ProtocolError) -> SplitError {
        let frame = (!is_peer_abort(&e)).then(|| self.session.abort(&e.to_string()));
        abort_on(tr, frame, e.into())
    }

    fn fail_local<Tr: Transport>(&mut self, tr: &mut Tr, e: SplitError) -> SplitError {
        let frame = self.session.abort(&e.to_string());
        abort_on(tr, Some(frame), e)
    }

    fn train_on(&mut self, t_mid: Tensor<T>, y: &Tensor<T>) -> Result<(StepRecord, Tensor<T>), SplitError> {
        let mut tape = Tape::new();
        let dec = self.dec.bind(&mut tape, true);
        let dis = self.dis.bind(&mut tape, false);
        let mid = tape.param(t_mid);
        let yv = tape.constant(y.clone());
        let pred = decode(&mut tape, &dec, &self.config, mid)?;
        let losses = generator_objective(&mut tape, &dis, &self.config, &self.train, pred, yv)?;
        let mut grads = tape.backward(losses.total)?;
        let g_dec = Optimizer::collect(&self.dec, &dec, &grads);
        let back = grads
            .take(mid)
            .unwrap_or_else(|| Tensor::zeros(tape.shape(mid)));
        let pred_value = tape.value(pred).clone();
        let (l_dis, g_dis) = discriminator_grads(&self.dis, &self.config, &self.train, y, &pred_value)?;
        let item = |v: Var| tape.value(v).item().unwrap_or(T::nan()).to_f64_lossy();
        let record = StepRecord {
            step: self.log.len() as u64,
            l_rec: item(losses.l_rec),
            l_adv: item(losses.l_adv),
            l_dis,
        }
        .check_finite()?;
        self.dec_opt.apply(&mut self.dec, &g_dec);
        self.dis_opt.apply(&mut self.dis, &g_dis);
        self.log.push(record);
        Ok((record, back))
    }

    fn score_on(&self, t_mid: Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>, SplitError> {
        let mut tape = Tape::new();
        let dec = self.dec.bind(&mut tape, false);
        let mid = tape.constant(t_mid);
        let pred = decode(&mut tape, &dec, &self.config, mid)?;
        Ok(score_predictions(tape.value(pred), y)?)
    }
}
