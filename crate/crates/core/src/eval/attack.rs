//! Reconstruction attack on intercepted `T_Mid` payloads.
//!
//! The attacker holds paired (wire payload, raw window) examples and fits a
//! per-token MLP from payload tokens to the raw channels at the same step.
//! In plain runs the payload is the quantized activation itself; in masked
//! runs it is the activation plus a uniform mask word.

use super::metrics::r2;
use super::EvalError;
use crate::crypto::MaskedBlob;
use crate::model::{Optimizer, OptimizerKind, ParamSet};
use crate::protocol::payload::decode_client_data;
use crate::protocol::{Frame, Mode, MsgType};
use crate::tensor::{Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

/// One intercepted `M_CS2` and the raw batch `[b, seq, C]` behind it.
#[derive(Clone, Debug)]
pub struct Intercepted {
    pub payload: MaskedBlob,
    pub raw: Tensor<f64>,
}

/// Pairs every client data frame on the wire, in order, with its raw batch.
pub fn pair_intercepts(wire: &[Vec<u8>], raws: &[Tensor<f64>]) -> Result<Vec<Intercepted>, EvalError> {
    let mut blobs = Vec::new();
    for bytes in wire {
        let Ok(frame) = Frame::decode(bytes) else { continue };
        if frame.msg_type == MsgType::ClientData {
            let (_, blob, _) = decode_client_data(&frame.payload).map_err(|e| EvalError::Input(e.to_string()))?;
            blobs.push(blob);
        }
    }
    if blobs.len() != raws.len() {
        return Err(EvalError::Input(format!(
            "{} client data frames but {} raw batches",
            blobs.len(),
            raws.len()
        )));
    }
    blobs
        .into_iter()
        .zip(raws)
        .map(|(payload, raw)| {
            let (ps, rs) = (&payload.shape, raw.shape());
            if ps.len() != 3 || rs.len() != 3 || ps[0] != rs[0] || ps[1] != rs[1] + 1 {
                return Err(EvalError::Input(format!("payload {ps:?} does not fit raw {rs:?}")));
            }
            Ok(Intercepted { payload, raw: raw.clone() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    /// Token rows per optimizer step.
    pub batch: usize,
    pub seed: u64,
    /// Fraction of samples the attacker trains on; the rest are held out.
    pub aux_fraction: f64,
    pub trace_channel: usize,
    pub trace_samples: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            hidden: 64,
            steps: 1500,
            lr: 3e-3,
            batch: 256,
            seed: 0,
            aux_fraction: 0.7,
            trace_channel: 0,
            trace_samples: 4,
        }
    }
}

pub const MIN_AUX_PAIRS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport {
    pub mode: Mode,
    /// R² of each held-out window.
    pub r2: Vec<f64>,
    pub mean_r2: f64,
    pub aux_pairs: usize,
    pub trace_real: Vec<f64>,
    pub trace_recon: Vec<f64>,
    pub warnings: Vec<String>,
}

impl AttackReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "mode={:?} aux_pairs={} held_out={} mean_r2={:.4}\n",
            self.mode,
            self.aux_pairs,
            self.r2.len(),
            self.mean_r2
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    pub fn r2_csv(&self) -> String {
        let mut s = String::from("mode,sample,r2\n");
        for (i, v) in self.r2.iter().enumerate() {
            let _ = writeln!(s, "{:?},{i},{v}", self.mode);
        }
        s
    }
}

/// `index,real,recon_plain,recon_masked` over the shared held-out trace.
pub fn trace_csv(plain: &AttackReport, masked: &AttackReport) -> Result<String, EvalError> {
    if plain.trace_real != masked.trace_real {
        return Err(EvalError::Input("plain and masked traces cover different windows".into()));
    }
    let mut s = String::from("index,real,recon_plain,recon_masked\n");
    for i in 0..plain.trace_real.len() {
        let _ = writeln!(
            s,
            "{i},{},{},{}",
            plain.trace_real[i], plain.trace_recon[i], masked.trace_recon[i]
        );
    }
    Ok(s)
}

/// Per-sample token features (class token dropped) and raw rows.
struct Samples {
    d: usize,
    c: usize,
    seq: usize,
    feats: Vec<Vec<f64>>,
    raws: Vec<Vec<f64>>,
}

fn flatten(data: &[Intercepted]) -> Result<Samples, EvalError> {
    let first = data.first().ok_or_else(|| EvalError::Input("no intercepted payloads".into()))?;
    let (seq, d, c) = (first.raw.shape()[1], first.payload.shape[2], first.raw.shape()[2]);
    let mut out = Samples {
        d,
        c,
        seq,
        feats: Vec::new(),
        raws: Vec::new(),
    };
    for it in data {
        let (ps, rs) = (&it.payload.shape, it.raw.shape());
        if ps[1] != seq + 1 || ps[2] != d || rs[1] != seq || rs[2] != c {
            return Err(EvalError::Input("intercepts with mixed shapes".into()));
        }
        let scale = (1u64 << it.payload.frac_bits) as f64;
        for b in 0..ps[0] {
            let base = b * (seq + 1) * d + d;
            let f = it.payload.words[base..base + seq * d]
                .iter()
                .map(|&w| w as i32 as f64 / scale)
                .collect();
            out.feats.push(f);
            out.raws.push(it.raw.data()[b * seq * c..(b + 1) * seq * c].to_vec());
        }
    }
    Ok(out)
}

struct Attacker {
    params: ParamSet<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Attacker {
    fn fit(s: &Samples, idx: &[usize], cfg: &AttackConfig) -> Result<Self, EvalError> {
        let (d, c) = (s.d, s.c);
        let rows: Vec<(usize, usize)> = idx.iter().flat_map(|&i| (0..s.seq).map(move |t| (i, t))).collect();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for &(i, t) in &rows {
            for k in 0..d {
                mean[k] += s.feats[i][t * d + k] / n;
            }
        }
        for &(i, t) in &rows {
            for k in 0..d {
                std[k] += (s.feats[i][t * d + k] - mean[k]).powi(2) / n;
            }
        }
        let std: Vec<f64> = std.into_iter().map(|v| v.sqrt().max(1e-12)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let h = cfg.hidden;
        let mut params = ParamSet::new();
        params.insert("atk.w1", Tensor::randn(&[d, h], 1.0 / (d as f64).sqrt(), &mut rng));
        params.insert("atk.b1", Tensor::zeros(&[h]));
        params.insert("atk.w2", Tensor::randn(&[h, c], 1.0 / (h as f64).sqrt(), &mut rng));
        params.insert("atk.b2", Tensor::zeros(&[c]));
        let mut att = Attacker { params, mean, std };
        let mut opt = Optimizer::new(OptimizerKind::adam(), cfg.lr);
        let mut order = rows.clone();
        let mut pos = order.len();
        for _ in 0..cfg.steps {
            if pos + cfg.batch > order.len() {
                order.shuffle(&mut rng);
                pos = 0;
            }
            let chunk = &order[pos..(pos + cfg.batch).min(order.len())];
            pos += cfg.batch;
            let x = att.features(s, chunk);
            let y: Vec<f64> = chunk
                .iter()
                .flat_map(|&(i, t)| s.raws[i][t * c..(t + 1) * c].iter().copied())
                .collect();
            let mut tape = Tape::new();
            let bound = att.params.bind(&mut tape, true);
            let xv = tape.constant(Tensor::new(&[chunk.len(), d], x)?);
            let yv = tape.constant(Tensor::new(&[chunk.len(), c], y)?);
            let pred = Self::forward(&mut tape, &bound, xv)?;
            let diff = tape.sub(pred, yv)?;
            let sq = tape.mul(diff, diff)?;
            let loss = tape.mean_all(sq);
            let grads = tape.backward(loss)?;
            let g = Optimizer::collect(&att.params, &bound, &grads);
            opt.apply(&mut att.params, &g);
        }
        Ok(att)
    }

    fn features(&self, s: &Samples, rows: &[(usize, usize)]) -> Vec<f64> {
        let d = s.d;
        rows.iter()
            .flat_map(|&(i, t)| (0..d).map(move |k| (i, t, k)))
            .map(|(i, t, k)| (s.feats[i][t * d + k] - self.mean[k]) / self.std[k])
            .collect()
    }

    fn forward(
        tape: &mut Tape<f64>,
        p: &crate::model::Bound,
        x: crate::tensor::Var,
    ) -> Result<crate::tensor::Var, EvalError> {
        let h = tape.matmul(x, p.var("atk.w1"))?;
        let h = tape.add_bias(h, p.var("atk.b1"))?;
        let h = tape.gelu(h);
        let o = tape.matmul(h, p.var("atk.w2"))?;
        Ok(tape.add_bias(o, p.var("atk.b2"))?)
    }

    fn reconstruct(&self, s: &Samples, i: usize) -> Result<Vec<f64>, EvalError> {
        let rows: Vec<(usize, usize)> = (0..s.seq).map(|t| (i, t)).collect();
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(Tensor::new(&[s.seq, s.d], self.features(s, &rows))?);
        let out = Self::forward(&mut tape, &bound, x)?;
        Ok(tape.value(out).data().to_vec())
    }
}

fn evaluate(
    s: &Samples,
    att: &Attacker,
    held: &[usize],
    mode: Mode,
    aux_pairs: usize,
    cfg: &AttackConfig,
) -> Result<AttackReport, EvalError> {
    let mut report = AttackReport {
        mode,
        r2: Vec::with_capacity(held.len()),
        mean_r2: f64::NAN,
        aux_pairs,
        trace_real: Vec::new(),
        trace_recon: Vec::new(),
        warnings: Vec::new(),
    };
    if aux_pairs < MIN_AUX_PAIRS {
        report
            .warnings
            .push(format!("only {aux_pairs} auxiliary pairs (fewer than {MIN_AUX_PAIRS})"));
    }
    let ch = cfg.trace_channel.min(s.c - 1);
    let mut skipped = 0;
    for (k, &i) in held.iter().enumerate() {
        let rec = att.reconstruct(s, i)?;
        match r2(&s.raws[i], &rec) {
            Ok(v) => report.r2.push(v),
            Err(_) => skipped += 1,
        }
        if k < cfg.trace_samples {
            for t in 0..s.seq {
                report.trace_real.push(s.raws[i][t * s.c + ch]);
                report.trace_recon.push(rec[t * s.c + ch]);
            }
        }
    }
    if skipped > 0 {
        report.warnings.push(format!("{skipped} constant held-out windows skipped"));
    }
    if report.r2.is_empty() {
        return Err(EvalError::Input("no held-out window with variance".into()));
    }
    report.mean_r2 = report.r2.iter().sum::<f64>() / report.r2.len() as f64;
    Ok(report)
}

/// Trains on the first `aux_fraction` of the intercepted samples and reports
/// R² on the rest.
pub fn reconstruction_attack(intercepted: &[Intercepted], mode: Mode, cfg: &AttackConfig) -> Result<AttackReport, EvalError> {
    let s = flatten(intercepted)?;
    let n = s.feats.len();
    let cut = ((n as f64) * cfg.aux_fraction).round() as usize;
    if cut == 0 || cut >= n {
        return Err(EvalError::Input(format!("cannot split {n} samples at {}", cfg.aux_fraction)));
    }
    let aux: Vec<usize> = (0..cut).collect();
    let held: Vec<usize> = (cut..n).collect();
    let att = Attacker::fit(&s, &aux, cfg)?;
    evaluate(&s, &att, &held, mode, aux.len(), cfg)
}

/// Trains on every sample of `aux` and reports R² on every sample of `target`,
/// e.g. payloads from two sessions with different mask keys.
pub fn reconstruction_attack_across(
    aux: &[Intercepted],
    target: &[Intercepted],
    mode: Mode,
    cfg: &AttackConfig,
) -> Result<AttackReport, EvalError> {
    let mut all = aux.to_vec();
    all.extend_from_slice(target);
    let s = flatten(&all)?;
    let n_aux: usize = aux.iter().map(|i| i.raw.shape()[0]).sum();
    let aux_idx: Vec<usize> = (0..n_aux).collect();
    let held: Vec<usize> = (n_aux..s.feats.len()).collect();
    let att = Attacker::fit(&s, &aux_idx, cfg)?;
    evaluate(&s, &att, &held, mode, n_aux, cfg)
}
