//! The split GAN-Transformer: a client-side encoder, a server-side decoder
//! with a regression head, and a server-side discriminator.
//!
//! Parameters live in three disjoint [`ParamSet`]s named by prefix
//! (`enc.`, `dec.`, `dis.`). Generator layers keep their global index in
//! their name, so moving the split point only renames prefixes.

mod checkpoint;
pub(crate) mod gan;
mod optim;
mod params;
mod transformer;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gan::{
    adv_loss, anomaly_score, discriminator_loss, score_predictions, generator_objective, rec_loss, train_step, DisObjective, GanTrainer,
    GeneratorLosses, StepRecord, TrainConfig,
};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Bound, ParamSet};
pub use transformer::{decode, dis_features, dis_logits, encode, generator_forward, transformer_block};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("parameter {0} missing or misshapen")]
    Param(String),
    #[error("non-finite loss at step {step}: l_rec={l_rec} l_adv={l_adv} l_dis={l_dis}")]
    NonFiniteLoss {
        step: u64,
        l_rec: f64,
        l_adv: f64,
        l_dis: f64,
    },
}

/// Architecture hyperparameters shared by all three parameter sets.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Input channels per timestep.
    pub features: usize,
    pub d_model: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// Total generator transformer layers.
    pub layers: usize,
    /// Layers held by the client encoder; the decoder holds the rest.
    pub split: usize,
    pub mlp_hidden: usize,
    pub max_seq: usize,
    pub dis_layers: usize,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            features: 8,
            d_model: 32,
            heads: 4,
            head_dim: 8,
            layers: 4,
            split: 2,
            mlp_hidden: 64,
            max_seq: 96,
            dis_layers: 1,
            ln_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.heads * self.head_dim != self.d_model {
            return fail(format!(
                "heads ({}) × head_dim ({}) must equal d_model ({})",
                self.heads, self.head_dim, self.d_model
            ));
        }
        if self.split < 1 || self.split >= self.layers {
            return fail(format!("split {} must satisfy 1 ≤ split < layers ({})", self.split, self.layers));
        }
        if self.features == 0 || self.max_seq == 0 || self.mlp_hidden == 0 {
            return fail("features, max_seq and mlp_hidden must be positive".into());
        }
        if !(self.ln_eps > 0.0) {
            return fail("ln_eps must be positive".into());
        }
        Ok(())
    }
}

/// Parameter-name prefixes of the three sets.
pub const ENC: &str = "enc";
pub const DEC: &str = "dec";
pub const DIS: &str = "dis";

pub(crate) fn layer_prefix(set: &str, index: usize) -> String {
    format!("{set}.layer{index}")
}

/// Generator (`enc` + `dec`) and discriminator (`dis`) parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub enc: ParamSet<T>,
    pub dec: ParamSet<T>,
    pub dis: ParamSet<T>,
}

fn layer_shapes(cfg: &ModelConfig) -> Vec<(&'static str, Vec<usize>, Init)> {
    let d = cfg.d_model;
    let kd = cfg.heads * cfg.head_dim;
    let h = cfg.mlp_hidden;
    // residual projections shrink with depth so the stream stays O(1)
    let depth = (2.0 * cfg.layers.max(1) as f64).sqrt();
    vec![
        ("ln1_g", vec![d], Init::Ones),
        ("ln1_b", vec![d], Init::Zeros),
        ("w_qkv", vec![d, 3 * kd], Init::Fan(d)),
        ("w_msa", vec![kd, d], Init::Normal(1.0 / (kd as f64).sqrt() / depth)),
        ("ln2_g", vec![d], Init::Ones),
        ("ln2_b", vec![d], Init::Zeros),
        ("w1", vec![d, h], Init::Fan(d)),
        ("b1", vec![h], Init::Zeros),
        ("w2", vec![h, d], Init::Normal(1.0 / (h as f64).sqrt() / depth)),
        ("b2", vec![d], Init::Zeros),
    ]
}

#[derive(Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    /// `N(0, 1/fan_in)`
    Fan(usize),
    Normal(f64),
}

impl Init {
    fn make<T: Scalar>(self, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::Fan(n) => Tensor::randn(shape, 1.0 / (n as f64).sqrt(), rng),
            Init::Normal(std) => Tensor::randn(shape, std, rng),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Seeded initialization. Identical `(config, seed)` give identical values.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let (mut enc, mut dec, mut dis) = (ParamSet::new(), ParamSet::new(), ParamSet::new());

        enc.insert("enc.embed", Init::Fan(config.features).make(&[config.features, d], &mut rng));
        enc.insert("enc.pos", Init::Normal(0.02).make(&[config.max_seq + 1, d], &mut rng));
        enc.insert("enc.class", Init::Normal(0.02).make(&[d], &mut rng));
        for i in 0..config.layers {
            let (set, params) = if i < config.split { (ENC, &mut enc) } else { (DEC, &mut dec) };
            let prefix = layer_prefix(set, i);
            for (name, shape, init) in layer_shapes(config) {
                params.insert(format!("{prefix}.{name}"), init.make(&shape, &mut rng));
            }
        }
        dec.insert("dec.ln_g", Tensor::ones(&[d]));
        dec.insert("dec.ln_b", Tensor::zeros(&[d]));
        dec.insert("dec.head_w", Init::Fan(d).make(&[d, 1], &mut rng));
        dec.insert("dec.head_b", Tensor::zeros(&[1]));

        dis.insert("dis.embed", Init::Fan(1).make(&[1, d], &mut rng));
        dis.insert("dis.embed_b", Tensor::zeros(&[d]));
        dis.insert("dis.class", Init::Normal(0.02).make(&[d], &mut rng));
        dis.insert("dis.pos", Init::Normal(0.02).make(&[2, d], &mut rng));
        for i in 0..config.dis_layers {
            let prefix = layer_prefix(DIS, i);
            for (name, shape, init) in layer_shapes(config) {
                dis.insert(format!("{prefix}.{name}"), init.make(&shape, &mut rng));
            }
        }
        dis.insert("dis.ln_g", Tensor::ones(&[d]));
        dis.insert("dis.ln_b", Tensor::zeros(&[d]));
        dis.insert("dis.feat_w", Init::Fan(d).make(&[d, d], &mut rng));
        dis.insert("dis.feat_b", Tensor::zeros(&[d]));
        dis.insert("dis.head_w", Init::Fan(d).make(&[d, 1], &mut rng));
        dis.insert("dis.head_b", Tensor::zeros(&[1]));

        let p = Self { config: config.clone(), enc, dec, dis };
        p.validate()?;
        Ok(p)
    }

    /// Every expected tensor is present with the expected shape, and nothing else is.
    pub fn validate(&self) -> Result<(), ModelError> {
        let cfg = &self.config;
        cfg.validate()?;
        let d = cfg.d_model;
        let mut expect: Vec<(String, Vec<usize>, u8)> = vec![
            ("enc.embed".into(), vec![cfg.features, d], 0),
            ("enc.pos".into(), vec![cfg.max_seq + 1, d], 0),
            ("enc.class".into(), vec![d], 0),
            ("dec.ln_g".into(), vec![d], 1),
            ("dec.ln_b".into(), vec![d], 1),
            ("dec.head_w".into(), vec![d, 1], 1),
            ("dec.head_b".into(), vec![1], 1),
            ("dis.embed".into(), vec![1, d], 2),
            ("dis.embed_b".into(), vec![d], 2),
            ("dis.class".into(), vec![d], 2),
            ("dis.pos".into(), vec![2, d], 2),
            ("dis.ln_g".into(), vec![d], 2),
            ("dis.ln_b".into(), vec![d], 2),
            ("dis.feat_w".into(), vec![d, d], 2),
            ("dis.feat_b".into(), vec![d], 2),
            ("dis.head_w".into(), vec![d, 1], 2),
            ("dis.head_b".into(), vec![1], 2),
        ];
        for i in 0..cfg.layers {
            let (set, which) = if i < cfg.split { (ENC, 0) } else { (DEC, 1) };
            for (name, shape, _) in layer_shapes(cfg) {
                expect.push((format!("{}.{name}", layer_prefix(set, i)), shape, which));
            }
        }
        for i in 0..cfg.dis_layers {
            for (name, shape, _) in layer_shapes(cfg) {
                expect.push((format!("{}.{name}", layer_prefix(DIS, i)), shape, 2));
            }
        }
        let sets = [&self.enc, &self.dec, &self.dis];
        let mut counts = [0usize; 3];
        for (name, shape, which) in &expect {
            counts[*which as usize] += 1;
            match sets[*which as usize].get(name) {
                Some(t) if t.shape() == shape.as_slice() && t.is_finite() => {}
                _ => return Err(ModelError::Param(name.clone())),
            }
        }
        for (i, set) in sets.iter().enumerate() {
            if set.len() != counts[i] {
                let extra = set
                    .names()
                    .find(|n| !expect.iter().any(|(e, _, _)| e == n))
                    .unwrap_or("?")
                    .to_string();
                return Err(ModelError::Param(extra));
            }
        }
        Ok(())
    }

    /// Moves the client/server cut to `split` without changing any weight.
    pub fn resplit(&mut self, split: usize) -> Result<(), ModelError> {
        let mut cfg = self.config.clone();
        cfg.split = split;
        cfg.validate()?;
        let names: Vec<(String, usize)> = (0..self.config.layers)
            .flat_map(|i| layer_shapes(&self.config).into_iter().map(move |(n, _, _)| (n.to_string(), i)))
            .collect();
        let mut moved = Vec::new();
        for (name, i) in names {
            let from = if i < self.config.split { ENC } else { DEC };
            let key = format!("{}.{name}", layer_prefix(from, i));
            let t = if from == ENC { self.enc.remove(&key) } else { self.dec.remove(&key) };
            moved.push((i, name, t.ok_or(ModelError::Param(key))?));
        }
        for (i, name, t) in moved {
            if i < split {
                self.enc.insert(format!("{}.{name}", layer_prefix(ENC, i)), t);
            } else {
                self.dec.insert(format!("{}.{name}", layer_prefix(DEC, i)), t);
            }
        }
        self.config = cfg;
        self.validate()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            enc: self.enc.cast(),
            dec: self.dec.cast(),
            dis: self.dis.cast(),
        }
    }

    /// Generator prediction `[batch, 1]` for windows `[batch, seq, features]`.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let enc = self.enc.bind(&mut tape, false);
        let dec = self.dec.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let mid = encode(&mut tape, &enc, &self.config, xv)?;
        let out = decode(&mut tape, &dec, &self.config, mid)?;
        Ok(tape.value(out).clone())
    }
}
