//! Metrics, the seeded experiments and report files.

pub mod attack;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use attack::{
    pair_intercepts, reconstruction_attack, reconstruction_attack_across, trace_csv, AttackConfig, AttackReport,
    Intercepted,
};
pub use experiment::{
    experiment_auc, experiment_privacy, intercept, local_sessions, synth_series, train_detector, train_on_series, AucRow, AucTable,
    ExperimentConfig, PrivacyOutcome, Trained, CLIENT_ID,
};
pub use metrics::{auc, r2, ScoredSet};
pub use report::Reports;

use crate::crypto::CryptoError;
use crate::data::DataError;
use crate::model::ModelError;
use crate::splitlearn::SplitError;
use crate::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("AUC needs both classes")]
    SingleClass,
    #[error("R² undefined for a constant target")]
    ConstantTarget,
    #[error("{0}")]
    Input(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
