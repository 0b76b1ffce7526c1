mod common;

use common::parties::{keypair, parties, sessions, CLIENT_ID};
use gridsplit::crypto::keys::Registry;
use gridsplit::data::Windows;
use gridsplit::model::{DisObjective, GanTrainer, ModelConfig, ModelParams, OptimizerKind, StepRecord, TrainConfig};
use gridsplit::protocol::{ClientSession, Mode, ProtocolError, ServerSession, SessionConfig, TcpTransport};
use gridsplit::splitlearn::{
    audit_checkpoint, batches, calibrate_threshold, drift_monitor, loss_csv, serve, ClientNode, DriftMonitor,
    DriftState, LocalRun, Party, RunManifest, ServerNode, SplitError, Verdict,
};
use gridsplit::tensor::Tensor;
use gridsplit::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use rand_distr::{Distribution, StandardNormal};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

fn toy_model() -> ModelConfig {
    ModelConfig {
        features: 3,
        d_model: 8,
        heads: 2,
        head_dim: 4,
        layers: 3,
        split: 1,
        mlp_hidden: 12,
        max_seq: 6,
        dis_layers: 1,
        ln_eps: 1e-5,
    }
}

fn toy_train(optimizer: OptimizerKind, lr: f64) -> TrainConfig {
    TrainConfig {
        lambda_rec: 1.0,
        lambda_adv: 1.0,
        lr,
        batch: 4,
        seq_len: 5,
        epochs: 1,
        seed: 5,
        optimizer,
        dis_objective: DisObjective::Bce,
    }
}

/// Bounded toy windows: channels in [-0.25, 0.25], target their last-step sum.
fn toy_windows<T: Scalar>(n: usize, seed: u64) -> Windows<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (seq, f) = (5, 3);
    let x: Vec<f64> = (0..n * seq * f).map(|_| rng.gen_range(-0.25..0.25)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| x[(i * seq + seq - 1) * f..(i * seq + seq) * f].iter().sum::<f64>() / 3.0)
        .collect();
    Windows {
        x: Tensor::from_f64(&[n, seq, f], &x).unwrap(),
        y: Tensor::from_f64(&[n, 1], &y).unwrap(),
        ends: (0..n).collect(),
        labels: vec![false; n],
    }
}

fn session_cfg(mode: Mode, frac_bits: u8) -> SessionConfig {
    SessionConfig {
        frac_bits,
        mode,
        ..SessionConfig::default()
    }
}

fn local<T: Scalar>(params: &ModelParams<T>, train: &TrainConfig, cfg: SessionConfig, seed: u64) -> LocalRun<T> {
    let (c, s) = sessions(cfg);
    LocalRun::connect(c, s, params, train, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
}

fn run_steps<T: Scalar>(run: &mut LocalRun<T>, data: &Windows<T>, batch: usize, steps: usize, seed: u64) -> Vec<StepRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = Vec::new();
    while log.len() < steps {
        for idx in batches(data.len(), batch, &mut rng) {
            if log.len() == steps {
                break;
            }
            let (x, y) = data.batch(&idx);
            log.push(run.train_step(&x, &y).unwrap());
        }
    }
    log
}

fn max_param_diff<T: Scalar>(a: &ModelParams<T>, b: &ModelParams<T>) -> f64 {
    [(&a.enc, &b.enc), (&a.dec, &b.dec), (&a.dis, &b.dis)]
        .iter()
        .map(|(x, y)| x.max_abs_diff(y).expect("same layout").to_f64_lossy())
        .fold(0.0, f64::max)
}

#[test]
fn masked_and_plain_training_are_bit_identical() {
    let train = toy_train(OptimizerKind::adam(), 1e-2);
    let params = ModelParams::<f32>::init(&toy_model(), 3).unwrap();
    let data = toy_windows::<f32>(24, 1);
    let mut masked = local(&params, &train, session_cfg(Mode::Masked, 16), 1);
    let mut plain = local(&params, &train, session_cfg(Mode::Plain, 16), 2);
    let a = run_steps(&mut masked, &data, 4, 10, 9);
    let b = run_steps(&mut plain, &data, 4, 10, 9);
    assert_eq!(a, b);
    assert_eq!(masked.params(), plain.params());
    assert_ne!(masked.params(), params);
}

fn split_vs_monolithic(optimizer: OptimizerKind, lr: f64) -> f64 {
    let train = toy_train(optimizer, lr);
    let params = ModelParams::<f32>::init(&toy_model(), 4).unwrap();
    let data = toy_windows::<f32>(40, 2);
    let mut run = local(&params, &train, session_cfg(Mode::Masked, 30), 3);
    let split_log = run_steps(&mut run, &data, 4, 10, 11);

    let mut mono = GanTrainer::new(params.clone(), train).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mono_log = Vec::new();
    for idx in batches(data.len(), 4, &mut rng).into_iter().take(10) {
        let (x, y) = data.batch(&idx);
        mono_log.push(mono.step(&x, &y).unwrap());
    }
    for (s, m) in split_log.iter().zip(&mono_log) {
        assert!((s.l_rec - m.l_rec).abs() < 1e-5, "{s:?} vs {m:?}");
    }
    max_param_diff(&run.params(), &mono.params)
}

#[test]
fn split_training_matches_monolithic_sgd() {
    let d = split_vs_monolithic(OptimizerKind::Sgd, 0.05);
    assert!(d < 1e-5, "max parameter difference {d:e}");
}

#[test]
fn split_training_matches_monolithic_adam() {
    let d = split_vs_monolithic(OptimizerKind::adam(), 1e-3);
    assert!(d < 1e-5, "max parameter difference {d:e}");
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let train = toy_train(OptimizerKind::Sgd, 0.0);
    let params = ModelParams::<f32>::init(&toy_model(), 5).unwrap();
    let data = toy_windows::<f32>(20, 3);
    let mut run = local(&params, &train, SessionConfig::default(), 4);
    run_steps(&mut run, &data, 4, 6, 1);
    assert_eq!(run.params(), params);
}

#[test]
fn one_loss_record_per_batch() {
    let train = toy_train(OptimizerKind::Sgd, 0.01);
    let params = ModelParams::<f32>::init(&toy_model(), 6).unwrap();
    let data = toy_windows::<f32>(22, 4);
    let mut run = local(&params, &train, SessionConfig::default(), 5);
    let log = run.train_epoch(&data, &train, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(log.len(), 6);
    assert_eq!(run.server.losses().len(), 6);
    assert_eq!(run.client.steps(), 6);
    let csv = loss_csv(&log);
    assert_eq!(csv.lines().next(), Some("step,l_rec,l_adv"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn checkpoints_hold_only_their_party() {
    let train = toy_train(OptimizerKind::Sgd, 0.01);
    let params = ModelParams::<f32>::init(&toy_model(), 7).unwrap();
    let run = local(&params, &train, SessionConfig::default(), 6);
    let c = run.client.checkpoint();
    let s = run.server.checkpoint();
    assert_eq!(audit_checkpoint(&c, Party::Client).unwrap(), params.enc.len());
    assert_eq!(audit_checkpoint(&s, Party::Server).unwrap(), params.dec.len() + params.dis.len());
    assert!(audit_checkpoint(&c, Party::Server).is_err());
    assert!(audit_checkpoint(&s, Party::Client).is_err());
}

#[test]
fn abort_mid_epoch_keeps_completed_steps() {
    let train = toy_train(OptimizerKind::Sgd, 0.05);
    let params = ModelParams::<f32>::init(&toy_model(), 8).unwrap();
    let data = toy_windows::<f32>(16, 5);
    let mut run = local(&params, &train, SessionConfig::default(), 7);
    run_steps(&mut run, &data, 4, 2, 3);
    let after_two = run.params();

    // the next frame from the client is corrupted in flight
    let (x, y) = data.batch(&[0, 1, 2, 3]);
    run.client.send_train(&mut run.ct, &x, &y).unwrap();
    let frame = gridsplit::protocol::Transport::recv(&mut run.st).unwrap();
    let mut bytes = frame.encode();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    gridsplit::protocol::Transport::send_bytes(&mut run.ct, &bytes).unwrap();
    let err = run.server.handle(&mut run.st, &mut rand::rngs::OsRng).unwrap_err();
    assert!(matches!(err, SplitError::Protocol(ProtocolError::BadSignature(_))), "{err:?}");
    let err = run.client.finish_train(&mut run.ct).unwrap_err();
    assert!(matches!(err, SplitError::Protocol(ProtocolError::PeerAbort(_))), "{err:?}");
    assert_eq!(run.params(), after_two);
    assert_eq!(run.server.losses().len(), 2);
    assert!(!run.client.session.has_key_material());
    assert!(!run.server.session.has_key_material());
}

#[test]
fn detection_threshold_extremes() {
    let train = toy_train(OptimizerKind::Sgd, 0.01);
    let params = ModelParams::<f32>::init(&toy_model(), 9).unwrap();
    let data = toy_windows::<f32>(8, 6);
    let mut run = local(&params, &train, SessionConfig::default(), 8);
    let never = run.detect(&data.x, &data.y, f64::INFINITY).unwrap();
    assert_eq!(never.len(), 8);
    assert!(never.iter().all(|d| d.verdict == Verdict::Normal && d.score >= 0.0));
    let always = run.detect(&data.x, &data.y, -1.0).unwrap();
    assert!(always.iter().all(|d| d.verdict == Verdict::Anomaly));
    let direct = gridsplit::model::anomaly_score(&params, &data.x, &data.y).unwrap();
    for (d, s) in never.iter().zip(direct.data()) {
        assert!((d.score - *s as f64).abs() < 1e-3);
    }
}

#[test]
fn quantile_of_standard_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let s: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let q = calibrate_threshold(&s, 0.99).unwrap();
    assert!((q - 2.326).abs() < 0.1, "q = {q}");
}

#[test]
fn drift_false_alarms_are_rare() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cal: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut alarms = 0;
    for _ in 0..10_000 {
        let windows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..8).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        if drift_monitor(&cal, &windows, 3.0, 4).unwrap() == DriftState::Retrain {
            alarms += 1;
        }
    }
    assert!(alarms < 100, "{alarms} false alarms");
    let m = DriftMonitor::with_defaults(&cal).unwrap();
    let step = vec![vec![m.mean + 10.0 * m.std; 8]; 4];
    assert_eq!(drift_monitor(&cal, &step, 3.0, 4).unwrap(), DriftState::Retrain);
    assert_eq!(drift_monitor(&cal, &vec![vec![0.0; 8]; 50], 3.0, 4).unwrap(), DriftState::Stable);
}

#[test]
fn manifest_round_trip() {
    let mut m = RunManifest::new();
    m.set("seed", 7).set("mode", "masked").set("dataset_hash", "ab12");
    m.set("seed", 8);
    let parsed = RunManifest::parse(&m.render()).unwrap();
    assert_eq!(parsed, m);
    assert_eq!(parsed.get("seed"), Some("8"));
    assert!(RunManifest::parse("novalue").is_err());
}

#[test]
fn tcp_server_runs_independent_sessions() {
    let train = toy_train(OptimizerKind::Sgd, 0.05);
    let params = ModelParams::<f32>::init(&toy_model(), 10).unwrap();
    let p = parties();
    let second = keypair(0x33);
    let mut reg = Registry::new();
    reg.insert(CLIENT_ID, p.client.pk).unwrap();
    reg.insert("meter-0002", second.pk).unwrap();
    let reg = Arc::new(reg);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();

    let server_sk = p.server.sk.clone();
    let (mp, tr2) = (params.clone(), train.clone());
    let handle = std::thread::spawn(move || {
        serve(&listener, 2, |_| {
            let session = ServerSession::new(server_sk.clone(), reg.clone(), SessionConfig::default());
            ServerNode::new(session, mp.config.clone(), mp.dec.clone(), mp.dis.clone(), tr2.clone())
        })
    });

    let clients: Vec<_> = [(CLIENT_ID, p.client.sk.clone(), 3usize), ("meter-0002", second.sk.clone(), 5)]
        .into_iter()
        .map(|(id, sk, steps)| {
            let (params, train, server_pk) = (params.clone(), train.clone(), p.server.pk);
            std::thread::spawn(move || {
                let session = ClientSession::new(id, sk, server_pk, SessionConfig::default());
                let mut node = ClientNode::new(session, params.config.clone(), params.enc.clone(), &train);
                let mut tr = TcpTransport::new(TcpStream::connect(addr).unwrap());
                node.handshake(&mut tr, &mut ChaCha20Rng::from_entropy()).unwrap();
                let data = toy_windows::<f32>(4 * steps, steps as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(1);
                for idx in batches(data.len(), 4, &mut rng) {
                    let (x, y) = data.batch(&idx);
                    node.train_step(&mut tr, &x, &y).unwrap();
                }
                node.score(&mut tr, &data.x, &data.y).unwrap().len()
            })
        })
        .collect();
    let scored: Vec<usize> = clients.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(scored, vec![12, 20]);
    let mut results: Vec<_> = handle.join().unwrap().into_iter().map(Result::unwrap).collect();
    results.sort_by_key(|(_, s)| s.trained);
    let (ref n1, ref s1) = results[0];
    let (ref n2, ref s2) = results[1];
    assert_eq!((s1.trained, s1.scored), (3, 12));
    assert_eq!((s2.trained, s2.scored), (5, 20));
    assert_ne!(s1.peer, s2.peer);
    assert_ne!(n1.decoder(), n2.decoder());
}
