//! Seeded end-to-end experiments: split training on synthetic meters, the
//! theft-level AUC table, and the reconstruction attack in both modes.

use super::attack::{pair_intercepts, reconstruction_attack, AttackConfig, AttackReport, Intercepted};
use super::metrics::{auc, ScoredSet};
use super::EvalError;
use crate::crypto::keys::Registry;
use crate::crypto::KeyPair;
use crate::data::{inject_theft, synth_with, windowize, MeterSeries, NormStats, SynthConfig, Windows};
use crate::model::{DisObjective, ModelConfig, ModelParams, OptimizerKind, StepRecord, TrainConfig};
use crate::protocol::{ClientSession, Mode, ServerSession, SessionConfig};
use crate::splitlearn::{batches, calibrate_threshold, LocalRun, RunManifest};
use rand::SeedableRng;
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use std::fmt::Write as _;
use std::sync::Arc;

pub const CLIENT_ID: &str = "meter-0001";

/// Everything a seeded run depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub days: usize,
    pub households: usize,
    pub train_frac: f64,
    pub train_stride: usize,
    pub test_stride: usize,
    pub steps: usize,
    pub score_batch: usize,
    pub mode: Mode,
    pub frac_bits: u8,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    /// Desk-scale preset: two months of three summed households, 4-hour
    /// windows and a two-layer model.
    fn default() -> Self {
        let seq_len = 16;
        ExperimentConfig {
            seed: 7,
            days: 60,
            households: 3,
            train_frac: 0.7,
            train_stride: 1,
            test_stride: 4,
            steps: 4000,
            score_batch: 64,
            mode: Mode::Masked,
            frac_bits: 16,
            model: ModelConfig {
                features: 8,
                d_model: 24,
                heads: 2,
                head_dim: 12,
                layers: 2,
                split: 1,
                mlp_hidden: 48,
                max_seq: seq_len,
                dis_layers: 1,
                ln_eps: 1e-5,
            },
            train: TrainConfig {
                lambda_rec: 50.0,
                lambda_adv: 1.0,
                lr: 3e-3,
                batch: 32,
                seq_len,
                epochs: 1,
                seed: 7,
                optimizer: OptimizerKind::adam(),
                dis_objective: DisObjective::Bce,
            },
        }
    }
}

fn parse<T: std::str::FromStr>(m: &RunManifest, key: &str, into: &mut T) -> Result<(), EvalError> {
    if let Some(v) = m.get(key) {
        *into = v
            .parse()
            .map_err(|_| EvalError::Input(format!("config {key}: cannot parse {v:?}")))?;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn session(&self) -> SessionConfig {
        SessionConfig {
            frac_bits: self.frac_bits,
            mode: self.mode,
            ..SessionConfig::default()
        }
    }

    /// Reads `key=value` overrides on top of the defaults.
    pub fn from_manifest(m: &RunManifest) -> Result<Self, EvalError> {
        let mut c = ExperimentConfig::default();
        parse(m, "seed", &mut c.seed)?;
        parse(m, "days", &mut c.days)?;
        parse(m, "households", &mut c.households)?;
        parse(m, "train_frac", &mut c.train_frac)?;
        parse(m, "train_stride", &mut c.train_stride)?;
        parse(m, "test_stride", &mut c.test_stride)?;
        parse(m, "steps", &mut c.steps)?;
        parse(m, "score_batch", &mut c.score_batch)?;
        parse(m, "frac_bits", &mut c.frac_bits)?;
        parse(m, "d_model", &mut c.model.d_model)?;
        parse(m, "heads", &mut c.model.heads)?;
        parse(m, "head_dim", &mut c.model.head_dim)?;
        parse(m, "layers", &mut c.model.layers)?;
        parse(m, "split", &mut c.model.split)?;
        parse(m, "mlp_hidden", &mut c.model.mlp_hidden)?;
        parse(m, "dis_layers", &mut c.model.dis_layers)?;
        parse(m, "lambda_rec", &mut c.train.lambda_rec)?;
        parse(m, "lambda_adv", &mut c.train.lambda_adv)?;
        parse(m, "lr", &mut c.train.lr)?;
        parse(m, "batch", &mut c.train.batch)?;
        parse(m, "seq_len", &mut c.train.seq_len)?;
        c.model.max_seq = c.train.seq_len;
        c.train.seed = c.seed;
        if let Some(v) = m.get("mode") {
            c.mode = match v {
                "masked" => Mode::Masked,
                "plain" => Mode::Plain,
                _ => return Err(EvalError::Input(format!("config mode: {v:?} is not masked or plain"))),
            };
        }
        if let Some(v) = m.get("optimizer") {
            c.train.optimizer = match v {
                "adam" => OptimizerKind::adam(),
                "sgd" => OptimizerKind::Sgd,
                _ => return Err(EvalError::Input(format!("config optimizer: {v:?} is not adam or sgd"))),
            };
        }
        c.model.validate()?;
        c.train.validate()?;
        if !(c.train_frac > 0.0 && c.train_frac < 1.0) || c.train_stride == 0 || c.test_stride == 0 {
            return Err(EvalError::Input("train_frac must be in (0, 1); strides positive".into()));
        }
        Ok(c)
    }

    pub fn to_manifest(&self) -> RunManifest {
        let mut m = RunManifest::new();
        m.set("seed", self.seed)
            .set("days", self.days)
            .set("households", self.households)
            .set("train_frac", self.train_frac)
            .set("train_stride", self.train_stride)
            .set("test_stride", self.test_stride)
            .set("steps", self.steps)
            .set("score_batch", self.score_batch)
            .set("mode", if self.mode == Mode::Masked { "masked" } else { "plain" })
            .set("frac_bits", self.frac_bits)
            .set("seq_len", self.train.seq_len)
            .set("d_model", self.model.d_model)
            .set("heads", self.model.heads)
            .set("head_dim", self.model.head_dim)
            .set("layers", self.model.layers)
            .set("split", self.model.split)
            .set("mlp_hidden", self.model.mlp_hidden)
            .set("dis_layers", self.model.dis_layers)
            .set("lambda_rec", self.train.lambda_rec)
            .set("lambda_adv", self.train.lambda_adv)
            .set("lr", self.train.lr)
            .set("batch", self.train.batch)
            .set(
                "optimizer",
                if self.train.optimizer == OptimizerKind::Sgd { "sgd" } else { "adam" },
            );
        m
    }
}

/// Deterministic long-term keys for an in-process client and server.
pub fn local_sessions(seed: u64, cfg: &SessionConfig) -> (ClientSession, ServerSession) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x6b65_7973);
    let client = KeyPair::generate(&mut rng);
    let server = KeyPair::generate(&mut rng);
    let mut reg = Registry::new();
    reg.insert(CLIENT_ID, client.pk).expect("fresh registry");
    (
        ClientSession::new(CLIENT_ID, client.sk, server.pk, cfg.clone()),
        ServerSession::new(server.sk, Arc::new(reg), cfg.clone()),
    )
}

fn connect(cfg: &ExperimentConfig, params: &ModelParams<f32>, session: SessionConfig, salt: u64) -> Result<LocalRun<f32>, EvalError> {
    let (c, s) = local_sessions(cfg.seed, &session);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(salt));
    Ok(LocalRun::connect(c, s, params, &cfg.train, &mut rng)?)
}

/// A trained split model and the data it was trained and tested on.
pub struct Trained {
    pub config: ExperimentConfig,
    pub params: ModelParams<f32>,
    pub norm: NormStats,
    pub train: MeterSeries,
    pub test: MeterSeries,
    pub losses: Vec<StepRecord>,
    pub manifest: RunManifest,
}

pub fn synth_series(cfg: &ExperimentConfig) -> Result<MeterSeries, EvalError> {
    let mut sc = SynthConfig::new(cfg.seed, cfg.days, cfg.households);
    sc.seed = cfg.seed;
    Ok(synth_with(&sc)?.series)
}

/// Synthesizes the data set and trains on it; see [`train_on_series`].
pub fn train_detector(cfg: &ExperimentConfig) -> Result<Trained, EvalError> {
    train_on_series(synth_series(cfg)?, cfg)
}

/// Chronological split, normalization fitted on the training part, then
/// `cfg.steps` split-learning steps through the protocol.
pub fn train_on_series(series: MeterSeries, cfg: &ExperimentConfig) -> Result<Trained, EvalError> {
    series.validate()?;
    let (train, test) = series.split(cfg.train_frac);
    let norm = NormStats::fit(&train)?;
    norm.audit(&test)?;
    let mut model = cfg.model.clone();
    model.features = norm.channels.len();
    model.max_seq = cfg.train.seq_len;
    let windows: Windows<f32> = windowize(&train, cfg.train.seq_len, cfg.train_stride, &norm)?;
    let params = ModelParams::<f32>::init(&model, cfg.seed)?;
    let mut run = connect(cfg, &params, cfg.session(), 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.steps);
    'outer: loop {
        for idx in batches(windows.len(), cfg.train.batch, &mut rng) {
            if losses.len() >= cfg.steps {
                break 'outer;
            }
            let (x, y) = windows.batch(&idx);
            losses.push(run.train_step(&x, &y)?);
        }
        if windows.is_empty() {
            break;
        }
    }
    let params = run.params();
    let mut manifest = cfg.to_manifest();
    manifest
        .set("features", norm.channels.join(" "))
        .set("dropped_channels", norm.dropped.join(" "))
        .set("dataset_hash", series.content_hash())
        .set("train_hash", train.content_hash())
        .set("test_hash", test.content_hash())
        .set("train_windows", windows.len())
        .set("steps_run", losses.len());
    Ok(Trained {
        config: cfg.clone(),
        params,
        norm,
        train,
        test,
        losses,
        manifest,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AucRow {
    pub level: f64,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Share of theft windows scoring above the 99th percentile of clean ones.
    pub above_q99: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AucTable {
    pub rows: Vec<AucRow>,
}

impl AucTable {
    pub fn get(&self, level: f64) -> Option<&AucRow> {
        self.rows.iter().find(|r| (r.level - level).abs() < 1e-12)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,auc,positives,negatives,above_q99\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6},{},{},{:.6}", r.level, r.auc, r.positives, r.negatives, r.above_q99);
        }
        s
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<12}{:>8}{:>10}{:>10}{:>12}\n", "theft level", "AUC", "theft", "clean", "> q99 clean");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12}{:>8.3}{:>10}{:>10}{:>12.3}",
                format!("{:.0}%", r.level * 100.0),
                r.auc,
                r.positives,
                r.negatives,
                r.above_q99
            );
        }
        s
    }
}

/// One AUC per theft level on the test split, scored through the protocol.
///
/// Every test window is scored twice: as recorded (negative) and with the
/// whole split under-reported by the level (positive). Pairing the windows
/// keeps time-of-day effects out of the comparison.
pub fn experiment_auc(trained: &Trained, levels: &[f64]) -> Result<AucTable, EvalError> {
    let cfg = &trained.config;
    let mut run = connect(cfg, &trained.params, cfg.session(), 2)?;
    let clean_w: Windows<f32> = windowize(&trained.test, cfg.train.seq_len, cfg.test_stride, &trained.norm)?;
    let clean = run.score_windows(&clean_w, cfg.score_batch)?;
    let q99 = calibrate_threshold(&clean, 0.99)?;
    let mut rows = Vec::new();
    for &level in levels {
        let theft = inject_theft(&trained.test, level, 0, trained.test.len())?;
        let w: Windows<f32> = windowize(&theft, cfg.train.seq_len, cfg.test_stride, &trained.norm)?;
        let pos = run.score_windows(&w, cfg.score_batch)?;
        let above = pos.iter().filter(|&&s| s > q99).count() as f64 / pos.len().max(1) as f64;
        let mut set = ScoredSet::default();
        for &s in &clean {
            set.push(s, false);
        }
        for &s in &pos {
            set.push(s, true);
        }
        rows.push(AucRow {
            level,
            auc: auc(&set)?,
            positives: pos.len(),
            negatives: clean.len(),
            above_q99: above,
        });
    }
    Ok(AucTable { rows })
}

/// Runs scoring traffic for the test windows over a tapped channel and pairs
/// each intercepted payload with the raw batch behind it.
pub fn intercept(trained: &Trained, mode: Mode, salt: u64) -> Result<Vec<Intercepted>, EvalError> {
    let cfg = &trained.config;
    let session = SessionConfig {
        mode,
        ..cfg.session()
    };
    let (c, s) = local_sessions(cfg.seed.wrapping_add(salt), &session);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(salt));
    let (mut run, tap) = LocalRun::connect_tapped(c, s, &trained.params, &cfg.train, &mut rng)?;
    let w: Windows<f32> = windowize(&trained.test, cfg.train.seq_len, cfg.test_stride, &trained.norm)?;
    let idx: Vec<usize> = (0..w.len()).collect();
    let mut raws = Vec::new();
    for chunk in idx.chunks(cfg.score_batch.max(1)) {
        let (x, y) = w.batch(chunk);
        run.score(&x, &y)?;
        raws.push(x.cast::<f64>());
    }
    let wire = tap.lock().expect("tap lock").clone();
    pair_intercepts(&wire, &raws)
}

pub struct PrivacyOutcome {
    pub plain: AttackReport,
    pub masked: AttackReport,
    pub trace_csv: String,
}

/// The attack against plain-mode and masked-mode traffic of the same windows.
pub fn experiment_privacy(trained: &Trained, attack: &AttackConfig) -> Result<PrivacyOutcome, EvalError> {
    let plain = reconstruction_attack(&intercept(trained, Mode::Plain, 10)?, Mode::Plain, attack)?;
    let masked = reconstruction_attack(&intercept(trained, Mode::Masked, 11)?, Mode::Masked, attack)?;
    let trace_csv = super::attack::trace_csv(&plain, &masked)?;
    Ok(PrivacyOutcome { plain, masked, trace_csv })
}
