//! TCP serving: one thread and one independent `ServerNode` per session.

use super::node::{ClientNode, ServerEvent, ServerNode};
use super::SplitError;
use crate::protocol::{Phase, ProtocolError, TcpTransport, Transport};
use crate::scalar::Scalar;
use crate::data::Windows;
use crate::model::TrainConfig;
use rand::rngs::OsRng;
use rand::Rng;
use std::net::TcpListener;

/// Counters for one finished session.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionSummary {
    pub peer: String,
    pub trained: usize,
    pub scored: usize,
}

/// Answers frames until the peer hangs up after the handshake.
pub fn serve_session<T: Scalar, Tr: Transport>(node: &mut ServerNode<T>, tr: &mut Tr) -> Result<SessionSummary, SplitError> {
    let mut summary = SessionSummary::default();
    loop {
        match node.handle(tr, &mut OsRng) {
            Ok(ServerEvent::Established(peer)) => {
                log::info!("session with {peer} established");
                summary.peer = peer;
            }
            Ok(ServerEvent::Trained(_)) => summary.trained += 1,
            Ok(ServerEvent::Scored(n)) => summary.scored += n,
            Err(SplitError::Protocol(ProtocolError::Io(_))) if node.session.phase() == Phase::Established => {
                log::info!("peer {} disconnected", summary.peer);
                node.session.close();
                return Ok(summary);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Accepts `sessions` connections and serves each on its own thread with a
/// node from `make(i)`. Results come back in accept order.
pub fn serve<T, F>(listener: &TcpListener, sessions: usize, make: F) -> Vec<Result<(ServerNode<T>, SessionSummary), SplitError>>
where
    T: Scalar,
    F: Fn(usize) -> ServerNode<T> + Sync,
{
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for i in 0..sessions {
            let make = &make;
            match listener.accept() {
                Ok((stream, addr)) => {
                    log::info!("connection {i} from {addr}");
                    handles.push(scope.spawn(move || {
                        let mut node = make(i);
                        let mut tr = TcpTransport::new(stream);
                        serve_session(&mut node, &mut tr).map(|s| (node, s))
                    }));
                }
                Err(e) => {
                    let err = SplitError::Protocol(ProtocolError::Io(e.to_string()));
                    handles.push(scope.spawn(move || Err(err)));
                }
            }
        }
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(SplitError::Config("session thread panicked".into()))))
            .collect()
    })
}

/// Client side of a remote run: `epochs` shuffled passes, one round trip per batch.
pub fn train_remote<T: Scalar, Tr: Transport, R: Rng + ?Sized>(
    client: &mut ClientNode<T>,
    tr: &mut Tr,
    data: &Windows<T>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<usize, SplitError> {
    let mut steps = 0;
    for _ in 0..cfg.epochs.max(1) {
        for idx in super::run::batches(data.len(), cfg.batch, rng) {
            let (x, y) = data.batch(&idx);
            client.train_step(tr, &x, &y)?;
            steps += 1;
        }
    }
    Ok(steps)
}
