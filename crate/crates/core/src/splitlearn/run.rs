//! Epoch driver over an in-process channel, run manifests, loss logs and
//! checkpoint audits.

use super::detect::{classify, Detection};
use super::node::{ClientNode, ServerEvent, ServerNode};
use super::SplitError;
use crate::data::Windows;
use crate::model::{read_checkpoint, ModelParams, StepRecord, TrainConfig};
use crate::protocol::{ClientSession, Loopback, ServerSession, Tap, Transport};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::rngs::OsRng;
use rand::seq::SliceRandom;
use rand::{CryptoRng, Rng, RngCore};
use std::fmt::{Display, Write as _};

/// Shuffled index batches covering `0..n`; the last one may be short.
pub fn batches<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

fn expect_trained(ev: ServerEvent) -> Result<StepRecord, SplitError> {
    match ev {
        ServerEvent::Trained(r) => Ok(r),
        other => Err(SplitError::Config(format!("server answered a training frame with {other:?}"))),
    }
}

/// One pass over `data` in shuffled batches, both parties in this thread.
///
/// A failure ends the epoch with the error; updates from completed steps stay
/// applied and their losses remain in [`ServerNode::losses`].
pub fn train_epoch<T: Scalar, A: Transport, B: Transport, R: Rng + ?Sized>(
    client: &mut ClientNode<T>,
    ct: &mut A,
    server: &mut ServerNode<T>,
    st: &mut B,
    data: &Windows<T>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<StepRecord>, SplitError> {
    let mut log = Vec::new();
    for idx in batches(data.len(), cfg.batch, rng) {
        let (x, y) = data.batch(&idx);
        client.send_train(ct, &x, &y)?;
        log.push(expect_trained(server.handle(st, &mut OsRng)?)?);
        client.finish_train(ct)?;
    }
    Ok(log)
}

/// Client scores through the server, both parties in this thread.
pub fn score_local<T: Scalar, A: Transport, B: Transport>(
    client: &mut ClientNode<T>,
    ct: &mut A,
    server: &mut ServerNode<T>,
    st: &mut B,
    x: &Tensor<T>,
    y: &Tensor<T>,
) -> Result<Vec<T>, SplitError> {
    client.send_score(ct, x, y)?;
    match server.handle(st, &mut OsRng)? {
        ServerEvent::Scored(_) => client.finish_score(ct),
        other => Err(SplitError::Config(format!("server answered a score frame with {other:?}"))),
    }
}

/// Flags each window of `x` whose score exceeds `threshold`.
pub fn detect<T: Scalar, A: Transport, B: Transport>(
    client: &mut ClientNode<T>,
    ct: &mut A,
    server: &mut ServerNode<T>,
    st: &mut B,
    x: &Tensor<T>,
    y: &Tensor<T>,
    threshold: f64,
) -> Result<Vec<Detection>, SplitError> {
    let scores = score_local(client, ct, server, st, x, y)?;
    Ok(scores.into_iter().map(|s| classify(s.to_f64_lossy(), threshold)).collect())
}

/// Both parties joined by an in-process channel.
pub struct LocalRun<T: Scalar> {
    pub client: ClientNode<T>,
    pub server: ServerNode<T>,
    pub ct: Loopback,
    pub st: Loopback,
}

impl<T: Scalar> LocalRun<T> {
    /// Splits `params` between the parties and runs the handshake.
    pub fn connect<R: RngCore + CryptoRng>(
        client: ClientSession,
        server: ServerSession,
        params: &ModelParams<T>,
        train: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self, SplitError> {
        let (ct, st) = Loopback::pair();
        Self::connect_over(client, server, params, train, ct, st, rng)
    }

    /// As [`LocalRun::connect`], also recording every frame on the wire.
    pub fn connect_tapped<R: RngCore + CryptoRng>(
        client: ClientSession,
        server: ServerSession,
        params: &ModelParams<T>,
        train: &TrainConfig,
        rng: &mut R,
    ) -> Result<(Self, Tap), SplitError> {
        let (ct, st, tap) = Loopback::tapped_pair();
        Ok((Self::connect_over(client, server, params, train, ct, st, rng)?, tap))
    }

    fn connect_over<R: RngCore + CryptoRng>(
        client: ClientSession,
        server: ServerSession,
        params: &ModelParams<T>,
        train: &TrainConfig,
        mut ct: Loopback,
        mut st: Loopback,
        rng: &mut R,
    ) -> Result<Self, SplitError> {
        let cfg = params.config.clone();
        let mut c = ClientNode::new(client, cfg.clone(), params.enc.clone(), train);
        let mut s = ServerNode::new(server, cfg, params.dec.clone(), params.dis.clone(), train.clone());
        c.start_handshake(&mut ct, rng)?;
        s.handle(&mut st, rng)?;
        c.finish_handshake(&mut ct)?;
        Ok(LocalRun {
            client: c,
            server: s,
            ct,
            st,
        })
    }

    pub fn train_epoch<R: Rng + ?Sized>(
        &mut self,
        data: &Windows<T>,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<Vec<StepRecord>, SplitError> {
        train_epoch(&mut self.client, &mut self.ct, &mut self.server, &mut self.st, data, cfg, rng)
    }

    pub fn train_step(&mut self, x: &Tensor<T>, y: &Tensor<T>) -> Result<StepRecord, SplitError> {
        self.client.send_train(&mut self.ct, x, y)?;
        let r = expect_trained(self.server.handle(&mut self.st, &mut OsRng)?)?;
        self.client.finish_train(&mut self.ct)?;
        Ok(r)
    }

    pub fn score(&mut self, x: &Tensor<T>, y: &Tensor<T>) -> Result<Vec<T>, SplitError> {
        score_local(&mut self.client, &mut self.ct, &mut self.server, &mut self.st, x, y)
    }

    /// Scores every window, `batch` at a time, in order.
    pub fn score_windows(&mut self, w: &Windows<T>, batch: usize) -> Result<Vec<f64>, SplitError> {
        let mut out = Vec::with_capacity(w.len());
        let idx: Vec<usize> = (0..w.len()).collect();
        for chunk in idx.chunks(batch.max(1)) {
            let (x, y) = w.batch(chunk);
            out.extend(self.score(&x, &y)?.into_iter().map(|s| s.to_f64_lossy()));
        }
        Ok(out)
    }

    pub fn detect(&mut self, x: &Tensor<T>, y: &Tensor<T>, threshold: f64) -> Result<Vec<Detection>, SplitError> {
        detect(&mut self.client, &mut self.ct, &mut self.server, &mut self.st, x, y, threshold)
    }

    /// Reassembles the full model from both parties' current parameters.
    pub fn params(&self) -> ModelParams<T> {
        ModelParams {
            config: self.client.config().clone(),
            enc: self.client.params().clone(),
            dec: self.server.decoder().clone(),
            dis: self.server.discriminator().clone(),
        }
    }
}

/// Plain-text `key=value` record of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let v = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.to_string(), v)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, SplitError> {
        let mut m = RunManifest::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SplitError::Config(format!("manifest line {}: expected key=value", i + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }
}

/// `step,l_rec,l_adv` with one row per record.
pub fn loss_csv(records: &[StepRecord]) -> String {
    let mut s = String::from("step,l_rec,l_adv\n");
    for r in records {
        let _ = writeln!(s, "{},{},{}", r.step, r.l_rec, r.l_adv);
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Party {
    Client,
    Server,
}

/// Confirms a checkpoint holds only its party's tensors; returns their count.
pub fn audit_checkpoint(bytes: &[u8], party: Party) -> Result<usize, SplitError> {
    let set = read_checkpoint::<f32, _>(&mut &bytes[..])?;
    let allowed: &[&str] = match party {
        Party::Client => &["enc."],
        Party::Server => &["dec.", "dis."],
    };
    if let Some(bad) = set.names().find(|n| !allowed.iter().any(|p| n.starts_with(p))) {
        return Err(SplitError::Config(format!("{party:?} checkpoint holds foreign tensor {bad}")));
    }
    Ok(set.len())
}
