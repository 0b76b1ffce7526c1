use super::optim::{Optimizer, OptimizerKind};
use super::params::{Bound, ParamSet};
use super::transformer::{dis_features, dis_logits, generator_forward};
use super::{ModelConfig, ModelError, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};

/// How the discriminator is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DisObjective {
    /// Binary cross-entropy real/fake classifier.
    Bce,
    /// The discriminator also minimizes the feature-matching loss.
    FeatureMatching,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda_rec: f64,
    pub lambda_adv: f64,
    pub lr: f64,
    pub batch: usize,
    pub seq_len: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub dis_objective: DisObjective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_rec: 50.0,
            lambda_adv: 1.0,
            lr: 1e-3,
            batch: 32,
            seq_len: 96,
            epochs: 1,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            dis_objective: DisObjective::Bce,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda_rec >= 0.0 && self.lambda_adv >= 0.0) {
            return Err(ModelError::Config("loss weights must be nonnegative".into()));
        }
        // lr == 0 is allowed so a run can be replayed without moving any weight
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ModelError::Config("learning rate must be finite and nonnegative".into()));
        }
        if self.batch == 0 || self.seq_len == 0 {
            return Err(ModelError::Config("batch and seq_len must be positive".into()));
        }
        Ok(())
    }

    pub fn optimizer<T: Scalar>(&self) -> Optimizer<T> {
        Optimizer::new(self.optimizer, self.lr)
    }
}

/// Losses recorded for one training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub l_rec: f64,
    pub l_adv: f64,
    pub l_dis: f64,
}

impl StepRecord {
    pub fn check_finite(self) -> Result<Self, ModelError> {
        if self.l_rec.is_finite() && self.l_adv.is_finite() && self.l_dis.is_finite() {
            Ok(self)
        } else {
            Err(ModelError::NonFiniteLoss {
                step: self.step,
                l_rec: self.l_rec,
                l_adv: self.l_adv,
                l_dis: self.l_dis,
            })
        }
    }
}

/// Mean over the batch of the per-row L2 distance.
pub fn rec_loss<T: Scalar>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var, ModelError> {
    let diff = tape.sub(target, pred)?;
    let norms = tape.l2_last(diff)?;
    Ok(tape.mean_all(norms))
}

/// Feature matching: `‖mean f(target) − mean f(pred)‖₂` over the batch.
pub fn adv_loss<T: Scalar>(
    tape: &mut Tape<T>,
    dis: &Bound,
    cfg: &ModelConfig,
    target: Var,
    pred: Var,
) -> Result<Var, ModelError> {
    let real = dis_features(tape, dis, cfg, target)?;
    let fake = dis_features(tape, dis, cfg, pred)?;
    let real = tape.mean_leading(real)?;
    let fake = tape.mean_leading(fake)?;
    let d = tape.sub(real, fake)?;
    Ok(tape.l2_last(d)?)
}

pub struct GeneratorLosses {
    pub l_rec: Var,
    pub l_adv: Var,
    pub total: Var,
}

/// `λ_rec·L_rec + λ_adv·L_adv` with the discriminator bound as constants.
pub fn generator_objective<T: Scalar>(
    tape: &mut Tape<T>,
    dis: &Bound,
    cfg: &ModelConfig,
    train: &TrainConfig,
    pred: Var,
    target: Var,
) -> Result<GeneratorLosses, ModelError> {
    let l_rec = rec_loss(tape, pred, target)?;
    let l_adv = adv_loss(tape, dis, cfg, target, pred)?;
    let rec = tape.scale(l_rec, T::of(train.lambda_rec));
    let total = if train.lambda_adv == 0.0 {
        rec
    } else {
        let adv = tape.scale(l_adv, T::of(train.lambda_adv));
        tape.add(rec, adv)?
    };
    Ok(GeneratorLosses { l_rec, l_adv, total })
}

/// Discriminator loss on real targets and detached predictions.
pub fn discriminator_loss<T: Scalar>(
    tape: &mut Tape<T>,
    dis: &Bound,
    cfg: &ModelConfig,
    objective: DisObjective,
    target: Var,
    pred: Var,
) -> Result<Var, ModelError> {
    match objective {
        DisObjective::Bce => {
            let fr = dis_features(tape, dis, cfg, target)?;
            let lr = dis_logits(tape, dis, fr)?;
            let ff = dis_features(tape, dis, cfg, pred)?;
            let lf = dis_logits(tape, dis, ff)?;
            // -log σ(real) = softplus(-real); -log(1 - σ(fake)) = softplus(fake)
            let neg = tape.scale(lr, -T::one());
            let a = tape.softplus(neg);
            let a = tape.mean_all(a);
            let b = tape.softplus(lf);
            let b = tape.mean_all(b);
            Ok(tape.add(a, b)?)
        }
        DisObjective::FeatureMatching => adv_loss(tape, dis, cfg, target, pred),
    }
}

/// Discriminator loss value and gradients from detached predictions.
pub(crate) fn discriminator_grads<T: Scalar>(
    dis_set: &ParamSet<T>,
    cfg: &ModelConfig,
    train: &TrainConfig,
    target: &Tensor<T>,
    pred: &Tensor<T>,
) -> Result<(f64, Vec<(String, Tensor<T>)>), ModelError> {
    let mut tape = Tape::new();
    let dis = dis_set.bind(&mut tape, true);
    let t = tape.constant(target.clone());
    let p = tape.constant(pred.clone());
    let loss = discriminator_loss(&mut tape, &dis, cfg, train.dis_objective, t, p)?;
    let grads = tape.backward(loss)?;
    let collected = Optimizer::collect(dis_set, &dis, &grads);
    let value = tape.value(loss).item().unwrap_or(T::nan()).to_f64_lossy();
    Ok((value, collected))
}

/// Monolithic trainer holding the whole model and one optimizer per set.
#[derive(Clone, Debug)]
pub struct GanTrainer<T> {
    pub params: ModelParams<T>,
    pub config: TrainConfig,
    enc_opt: Optimizer<T>,
    dec_opt: Optimizer<T>,
    dis_opt: Optimizer<T>,
    steps: u64,
}

impl<T: Scalar> GanTrainer<T> {
    pub fn new(params: ModelParams<T>, config: TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        params.validate()?;
        Ok(Self {
            enc_opt: config.optimizer(),
            dec_opt: config.optimizer(),
            dis_opt: config.optimizer(),
            params,
            config,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One step on windows `x: [batch, seq, features]` with targets `y: [batch, 1]`.
    pub fn step(&mut self, x: &Tensor<T>, y: &Tensor<T>) -> Result<StepRecord, ModelError> {
        let cfg = self.params.config.clone();
        let mut tape = Tape::new();
        let enc = self.params.enc.bind(&mut tape, true);
        let dec = self.params.dec.bind(&mut tape, true);
        let dis = self.params.dis.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let pred = generator_forward(&mut tape, &enc, &dec, &cfg, xv)?;
        let losses = generator_objective(&mut tape, &dis, &cfg, &self.config, pred, yv)?;
        let grads = tape.backward(losses.total)?;
        let g_enc = Optimizer::collect(&self.params.enc, &enc, &grads);
        let g_dec = Optimizer::collect(&self.params.dec, &dec, &grads);

        let pred_value = tape.value(pred).clone();
        let (l_dis, g_dis) = discriminator_grads(&self.params.dis, &cfg, &self.config, y, &pred_value)?;

        let record = StepRecord {
            step: self.steps,
            l_rec: tape.value(losses.l_rec).item().unwrap_or(T::nan()).to_f64_lossy(),
            l_adv: tape.value(losses.l_adv).item().unwrap_or(T::nan()).to_f64_lossy(),
            l_dis,
        }
        .check_finite()?;

        self.enc_opt.apply(&mut self.params.enc, &g_enc);
        self.dec_opt.apply(&mut self.params.dec, &g_dec);
        self.dis_opt.apply(&mut self.params.dis, &g_dis);
        self.steps += 1;
        Ok(record)
    }
}

/// Applies one monolithic training step; see [`GanTrainer::step`].
pub fn train_step<T: Scalar>(trainer: &mut GanTrainer<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<StepRecord, ModelError> {
    trainer.step(x, y)
}

/// Per-window prediction error `‖y − ŷ‖₂`, shape `[batch]`.
pub fn anomaly_score<T: Scalar>(params: &ModelParams<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
    let pred = params.predict(x)?;
    score_predictions(&pred, y)
}

/// `‖y − ŷ‖₂` per row of `[batch, 1]` predictions.
pub fn score_predictions<T: Scalar>(pred: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let t = tape.constant(y.clone());
    let d = tape.sub(t, p)?;
    let n = tape.l2_last(d)?;
    Ok(tape.value(n).clone())
}
