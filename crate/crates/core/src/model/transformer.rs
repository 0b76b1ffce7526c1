use super::params::Bound;
use super::{layer_prefix, ModelConfig, ModelError, DEC, DIS, ENC};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorError, Var};

/// One pre-norm transformer layer on `z: [batch, tokens, d_model]`:
/// `z' = MSA(LN(z)) + z`, then `MLP(LN(z')) + z'`.
pub fn transformer_block<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound,
    prefix: &str,
    cfg: &ModelConfig,
    z: Var,
) -> Result<Var, TensorError> {
    let shape = tape.shape(z).to_vec();
    let (b, n, d) = (shape[0], shape[1], shape[2]);
    let (k, dh) = (cfg.heads, cfg.head_dim);
    let kd = k * dh;
    let eps = T::of(cfg.ln_eps);
    let w = |name: &str| p.var(&format!("{prefix}.{name}"));

    let h = tape.layernorm(z, w("ln1_g"), w("ln1_b"), eps)?;
    let h = tape.reshape(h, &[b * n, d])?;
    let qkv = tape.matmul(h, w("w_qkv"))?;
    let mut heads = Vec::with_capacity(3);
    for part in 0..3 {
        let s = tape.slice(qkv, 1, part * kd, kd)?;
        let s = tape.reshape(s, &[b, n, k, dh])?;
        let s = tape.permute(s, &[0, 2, 1, 3])?;
        heads.push(tape.reshape(s, &[b * k, n, dh])?);
    }
    let scores = tape.bmm(heads[0], heads[1], true)?;
    let scores = tape.scale(scores, T::one() / T::of(dh as f64).sqrt());
    let attn = tape.softmax_last(scores)?;
    let sa = tape.bmm(attn, heads[2], false)?;
    let sa = tape.reshape(sa, &[b, k, n, dh])?;
    let sa = tape.permute(sa, &[0, 2, 1, 3])?;
    let sa = tape.reshape(sa, &[b * n, kd])?;
    let msa = tape.matmul(sa, w("w_msa"))?;
    let msa = tape.reshape(msa, &[b, n, d])?;
    let z1 = tape.add(msa, z)?;

    let h = tape.layernorm(z1, w("ln2_g"), w("ln2_b"), eps)?;
    let h = tape.reshape(h, &[b * n, d])?;
    let h = tape.matmul(h, w("w1"))?;
    let h = tape.add_bias(h, w("b1"))?;
    let h = tape.gelu(h);
    let h = tape.matmul(h, w("w2"))?;
    let h = tape.add_bias(h, w("b2"))?;
    let h = tape.reshape(h, &[b, n, d])?;
    tape.add(h, z1)
}

/// Embeds `x: [batch, seq, features]`, prepends the class token, adds the
/// positional table and runs the encoder's layers. Returns `[batch, seq+1, d_model]`.
pub fn encode<T: Scalar>(tape: &mut Tape<T>, enc: &Bound, cfg: &ModelConfig, x: Var) -> Result<Var, ModelError> {
    let z = embed(tape, enc, cfg, x)?;
    let mut z = z;
    for i in 0..cfg.split {
        z = transformer_block(tape, enc, &layer_prefix(ENC, i), cfg, z)?;
    }
    Ok(z)
}

fn embed<T: Scalar>(tape: &mut Tape<T>, enc: &Bound, cfg: &ModelConfig, x: Var) -> Result<Var, ModelError> {
    let s = tape.shape(x).to_vec();
    if s.len() != 3 || s[2] != cfg.features {
        return Err(TensorError::ShapeMismatch {
            op: "encode",
            left: s,
            right: vec![0, 0, cfg.features],
        }
        .into());
    }
    let (b, n, f) = (s[0], s[1], s[2]);
    if n > cfg.max_seq {
        return Err(ModelError::Config(format!("sequence length {n} exceeds max_seq {}", cfg.max_seq)));
    }
    let d = cfg.d_model;
    let flat = tape.reshape(x, &[b * n, f])?;
    let tokens = tape.matmul(flat, enc.var("enc.embed"))?;
    let tokens = tape.reshape(tokens, &[b, n, d])?;
    let cls = tape.reshape(enc.var("enc.class"), &[1, d])?;
    let cls = tape.expand_leading(cls, b);
    let z = tape.concat(&[cls, tokens], 1)?;
    let pos = tape.slice(enc.var("enc.pos"), 0, 0, n + 1)?;
    Ok(tape.add_bias(z, pos)?)
}

/// Runs the decoder's layers on `T_Mid` and reads the regression output from
/// the final class-token embedding: `LN(z⁰) · head_w + head_b`, shape `[batch, 1]`.
pub fn decode<T: Scalar>(tape: &mut Tape<T>, dec: &Bound, cfg: &ModelConfig, t_mid: Var) -> Result<Var, ModelError> {
    let s = tape.shape(t_mid).to_vec();
    if s.len() != 3 || s[2] != cfg.d_model || s[1] < 1 || s[1] > cfg.max_seq + 1 {
        return Err(TensorError::ShapeMismatch {
            op: "decode",
            left: s,
            right: vec![0, 0, cfg.d_model],
        }
        .into());
    }
    let mut z = t_mid;
    for i in cfg.split..cfg.layers {
        z = transformer_block(tape, dec, &layer_prefix(DEC, i), cfg, z)?;
    }
    head(tape, dec, cfg, z)
}

fn head<T: Scalar>(tape: &mut Tape<T>, dec: &Bound, cfg: &ModelConfig, z: Var) -> Result<Var, ModelError> {
    let b = tape.shape(z)[0];
    let cls = tape.slice(z, 1, 0, 1)?;
    let cls = tape.reshape(cls, &[b, cfg.d_model])?;
    let y = tape.layernorm(cls, dec.var("dec.ln_g"), dec.var("dec.ln_b"), T::of(cfg.ln_eps))?;
    let out = tape.matmul(y, dec.var("dec.head_w"))?;
    Ok(tape.add_bias(out, dec.var("dec.head_b"))?)
}

/// The unsplit generator: all layers in one loop, no cut.
pub fn generator_forward<T: Scalar>(
    tape: &mut Tape<T>,
    enc: &Bound,
    dec: &Bound,
    cfg: &ModelConfig,
    x: Var,
) -> Result<Var, ModelError> {
    let mut z = embed(tape, enc, cfg, x)?;
    for i in 0..cfg.layers {
        let (set, bound) = if i < cfg.split { (ENC, enc) } else { (DEC, dec) };
        z = transformer_block(tape, bound, &layer_prefix(set, i), cfg, z)?;
    }
    head(tape, dec, cfg, z)
}

/// Discriminator feature layer `f` on scalar values `[batch, 1]` → `[batch, d_model]`.
///
/// Each value becomes a one-token sequence behind a class token; the class
/// token's final embedding passes through LN and a GELU feature layer.
pub fn dis_features<T: Scalar>(tape: &mut Tape<T>, dis: &Bound, cfg: &ModelConfig, values: Var) -> Result<Var, ModelError> {
    let s = tape.shape(values).to_vec();
    if s.len() != 2 || s[1] != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "dis_features",
            left: s,
            right: vec![0, 1],
        }
        .into());
    }
    let (b, d) = (s[0], cfg.d_model);
    let tok = tape.matmul(values, dis.var("dis.embed"))?;
    let tok = tape.add_bias(tok, dis.var("dis.embed_b"))?;
    let tok = tape.reshape(tok, &[b, 1, d])?;
    let cls = tape.reshape(dis.var("dis.class"), &[1, d])?;
    let cls = tape.expand_leading(cls, b);
    let z = tape.concat(&[cls, tok], 1)?;
    let mut z = tape.add_bias(z, dis.var("dis.pos"))?;
    for i in 0..cfg.dis_layers {
        z = transformer_block(tape, dis, &layer_prefix(DIS, i), cfg, z)?;
    }
    let c = tape.slice(z, 1, 0, 1)?;
    let c = tape.reshape(c, &[b, d])?;
    let c = tape.layernorm(c, dis.var("dis.ln_g"), dis.var("dis.ln_b"), T::of(cfg.ln_eps))?;
    let f = tape.matmul(c, dis.var("dis.feat_w"))?;
    let f = tape.add_bias(f, dis.var("dis.feat_b"))?;
    Ok(tape.gelu(f))
}

/// Real/fake logits `[batch, 1]` from discriminator features.
pub fn dis_logits<T: Scalar>(tape: &mut Tape<T>, dis: &Bound, features: Var) -> Result<Var, ModelError> {
    let l = tape.matmul(features, dis.var("dis.head_w"))?;
    Ok(tape.add_bias(l, dis.var("dis.head_b"))?)
}
