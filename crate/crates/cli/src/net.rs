//! `server` and `client`: the two parties of a split-learning run over TCP.

use crate::error::CliError;
use crate::keys;
use crate::rundir;
use gridsplit::data::{windowize, NormStats, Windows};
use gridsplit::eval::Reports;
use gridsplit::model::ModelParams;
use gridsplit::protocol::{ClientSession, ServerSession, TcpTransport};
use gridsplit::splitlearn::{batches, loss_csv, serve, ClientNode, ServerNode};
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::Arc;

pub fn server(listen: &str, keys: &Path, config: Option<&Path>, sessions: usize, reports: &Path) -> Result<(), CliError> {
    let cfg = rundir::load_config(config)?;
    let k = keys::load_server(keys)?;
    let registry = Arc::new(k.registry);
    let params = ModelParams::<f32>::init(&cfg.model, cfg.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let listener = TcpListener::bind(listen).map_err(|e| CliError::Usage(format!("{listen}: {e}")))?;
    eprintln!("listening on {}", listener.local_addr()?);
    let secret = k.secret.to_bytes();
    let results = serve(&listener, sessions, |_| {
        let sk = gridsplit::crypto::SecretKey::from_bytes(&secret).expect("key loaded above");
        let session = ServerSession::new(sk, registry.clone(), cfg.session());
        ServerNode::new(
            session,
            params.config.clone(),
            params.dec.clone(),
            params.dis.clone(),
            cfg.train.clone(),
        )
    });
    let rep = Reports::new(reports.join("server"))?;
    let mut first_err = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((node, summary)) => {
                rep.write(&format!("session{i}.ckpt.hex"), &hex::encode(node.checkpoint()))?;
                rep.write(&format!("session{i}_losses.csv"), &loss_csv(node.losses()))?;
                println!(
                    "session {i}: peer {} trained {} batches, scored {} windows",
                    summary.peer, summary.trained, summary.scored
                );
            }
            Err(e) => {
                eprintln!("session {i}: {e}");
                first_err.get_or_insert(CliError::from(e));
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

pub fn client(connect: &str, keys: &Path, data: &Path, config: Option<&Path>, reports: &Path) -> Result<(), CliError> {
    let cfg = rundir::load_config(config)?;
    let k = keys::load_client(keys)?;
    let series = rundir::load_series(Some(data), &cfg)?;
    series.validate()?;
    let (train, test) = series.split(cfg.train_frac);
    let norm = NormStats::fit(&train)?;
    norm.audit(&test)?;
    let mut model = cfg.model.clone();
    model.features = norm.channels.len();
    model.max_seq = cfg.train.seq_len;
    let params = ModelParams::<f32>::init(&model, cfg.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let windows: Windows<f32> = windowize(&train, cfg.train.seq_len, cfg.train_stride, &norm)?;
    let test_w: Windows<f32> = windowize(&test, cfg.train.seq_len, cfg.test_stride, &norm)?;

    let stream = TcpStream::connect(connect).map_err(|e| CliError::Protocol(format!("{connect}: {e}")))?;
    let mut tr = TcpTransport::new(stream);
    let session = ClientSession::new(&k.id, k.secret, k.server, cfg.session());
    let mut node = ClientNode::new(session, model, params.enc, &cfg.train);
    node.handshake(&mut tr, &mut OsRng)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut steps = 0;
    while steps < cfg.steps && !windows.is_empty() {
        for idx in batches(windows.len(), cfg.train.batch, &mut rng) {
            if steps >= cfg.steps {
                break;
            }
            let (x, y) = windows.batch(&idx);
            node.train_step(&mut tr, &x, &y)?;
            steps += 1;
        }
    }
    let mut scores = String::from("end,score,label\n");
    let idx: Vec<usize> = (0..test_w.len()).collect();
    for chunk in idx.chunks(cfg.score_batch.max(1)) {
        let (x, y) = test_w.batch(chunk);
        for (&i, s) in chunk.iter().zip(node.score(&mut tr, &x, &y)?) {
            let _ = writeln!(scores, "{},{s},{}", test_w.ends[i], test_w.labels[i] as u8);
        }
    }
    let rep = Reports::new(reports.join("client"))?;
    rep.write("encoder.ckpt.hex", &hex::encode(node.checkpoint()))?;
    rep.write("scores.csv", &scores)?;
    println!(
        "trained {steps} batches, scored {} test windows; reports in {}",
        test_w.len(),
        rep.dir().display()
    );
    Ok(())
}
