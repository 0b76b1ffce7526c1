//! Split training and detection across the protocol: the client holds the
//! encoder, the server holds the decoder and discriminator.

pub mod detect;
pub mod net;
pub mod node;
pub mod run;

pub use detect::{calibrate_threshold, classify, drift_monitor, Detection, DriftMonitor, DriftState, Verdict};
pub use net::{serve, serve_session, train_remote, SessionSummary};
pub use node::{ClientNode, ServerEvent, ServerNode};
pub use run::{audit_checkpoint, batches, detect, loss_csv, score_local, train_epoch, LocalRun, Party, RunManifest};

use crate::data::DataError;
use crate::model::{CheckpointError, ModelError};
use crate::protocol::ProtocolError;
use crate::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("tensor: {0}")]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("configuration: {0}")]
    Config(String),
}
