//! Loop-based f64 transformer written straight from the layer equations.
//! Shares no code with the tape so it can serve as an oracle.

use gridsplit::model::{ModelConfig, ParamSet};
use gridsplit::Tensor64;

type Mat = Vec<Vec<f64>>;

fn get<'a>(p: &'a ParamSet<f64>, name: &str) -> &'a Tensor64 {
    p.get(name).unwrap_or_else(|| panic!("missing {name}"))
}

fn rows(t: &Tensor64) -> Mat {
    let c = *t.shape().last().unwrap();
    t.data().chunks(c).map(|r| r.to_vec()).collect()
}

fn vecmat(v: &[f64], m: &Mat) -> Vec<f64> {
    let cols = m[0].len();
    (0..cols).map(|j| v.iter().zip(m).map(|(a, row)| a * row[j]).sum()).collect()
}

fn layernorm(x: &[f64], g: &[f64], b: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + eps).sqrt() * g[i] + b[i])
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn block(p: &ParamSet<f64>, prefix: &str, cfg: &ModelConfig, z: &Mat) -> Mat {
    let w = |n: &str| get(p, &format!("{prefix}.{n}"));
    let (k, dh) = (cfg.heads, cfg.head_dim);
    let kd = k * dh;
    let eps = cfg.ln_eps;
    let h: Mat = z
        .iter()
        .map(|r| layernorm(r, w("ln1_g").data(), w("ln1_b").data(), eps))
        .collect();
    let qkv: Mat = h.iter().map(|r| vecmat(r, &rows(w("w_qkv")))).collect();
    let n = z.len();
    let mut concat = vec![vec![0.0; kd]; n];
    for head in 0..k {
        let q = |i: usize| &qkv[i][head * dh..(head + 1) * dh];
        let kk = |i: usize| &qkv[i][kd + head * dh..kd + (head + 1) * dh];
        let v = |i: usize| &qkv[i][2 * kd + head * dh..2 * kd + (head + 1) * dh];
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| q(i).iter().zip(kk(j)).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for j in 0..n {
                for d in 0..dh {
                    concat[i][head * dh + d] += e[j] / s * v(j)[d];
                }
            }
        }
    }
    let z1: Mat = concat
        .iter()
        .zip(z)
        .map(|(c, zr)| vecmat(c, &rows(w("w_msa"))).iter().zip(zr).map(|(a, b)| a + b).collect())
        .collect();
    z1.iter()
        .map(|r| {
            let h = layernorm(r, w("ln2_g").data(), w("ln2_b").data(), eps);
            let a: Vec<f64> = vecmat(&h, &rows(w("w1")))
                .iter()
                .zip(w("b1").data())
                .map(|(x, b)| gelu(x + b))
                .collect();
            vecmat(&a, &rows(w("w2")))
                .iter()
                .zip(w("b2").data())
                .zip(r)
                .map(|((x, b), res)| x + b + res)
                .collect()
        })
        .collect()
}

/// One sample `x: seq × features` → `(seq+1) × d_model`.
pub fn encode(enc: &ParamSet<f64>, cfg: &ModelConfig, x: &Mat) -> Mat {
    let embed = rows(get(enc, "enc.embed"));
    let pos = rows(get(enc, "enc.pos"));
    let mut z = vec![get(enc, "enc.class").data().to_vec()];
    z.extend(x.iter().map(|r| vecmat(r, &embed)));
    for (i, r) in z.iter_mut().enumerate() {
        for (a, p) in r.iter_mut().zip(&pos[i]) {
            *a += p;
        }
    }
    for l in 0..cfg.split {
        z = block(enc, &format!("enc.layer{l}"), cfg, &z);
    }
    z
}

pub fn decode(dec: &ParamSet<f64>, cfg: &ModelConfig, mid: &Mat) -> f64 {
    let mut z = mid.clone();
    for l in cfg.split..cfg.layers {
        z = block(dec, &format!("dec.layer{l}"), cfg, &z);
    }
    let y = layernorm(&z[0], get(dec, "dec.ln_g").data(), get(dec, "dec.ln_b").data(), cfg.ln_eps);
    vecmat(&y, &rows(get(dec, "dec.head_w")))[0] + get(dec, "dec.head_b").data()[0]
}

pub fn dis_features(dis: &ParamSet<f64>, cfg: &ModelConfig, value: f64) -> Vec<f64> {
    let d = cfg.d_model;
    let pos = rows(get(dis, "dis.pos"));
    let tok: Vec<f64> = (0..d)
        .map(|j| value * get(dis, "dis.embed").data()[j] + get(dis, "dis.embed_b").data()[j])
        .collect();
    let mut z = vec![get(dis, "dis.class").data().to_vec(), tok];
    for (i, r) in z.iter_mut().enumerate() {
        for (a, p) in r.iter_mut().zip(&pos[i]) {
            *a += p;
        }
    }
    for l in 0..cfg.dis_layers {
        z = block(dis, &format!("dis.layer{l}"), cfg, &z);
    }
    let c = layernorm(&z[0], get(dis, "dis.ln_g").data(), get(dis, "dis.ln_b").data(), cfg.ln_eps);
    vecmat(&c, &rows(get(dis, "dis.feat_w")))
        .iter()
        .zip(get(dis, "dis.feat_b").data())
        .map(|(a, b)| gelu(a + b))
        .collect()
}

/// `‖mean f(target) − mean f(pred)‖₂`
pub fn adv_loss(dis: &ParamSet<f64>, cfg: &ModelConfig, target: &[f64], pred: &[f64]) -> f64 {
    let mean = |vals: &[f64]| {
        let mut acc = vec![0.0; cfg.d_model];
        for &v in vals {
            for (a, f) in acc.iter_mut().zip(dis_features(dis, cfg, v)) {
                *a += f;
            }
        }
        acc.iter().map(|a| a / vals.len() as f64).collect::<Vec<_>>()
    };
    let (r, f) = (mean(target), mean(pred));
    r.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}
