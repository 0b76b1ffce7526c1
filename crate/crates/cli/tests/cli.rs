use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::Duration;

fn gridsplit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridsplit"))
        .args(args)
        .current_dir(dir)
        .env("SG_LOG", "error")
        .output()
        .expect("spawn gridsplit")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

const SMALL: &str = "days=24\nsteps=200\nseed=3\n";

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = gridsplit(dir.path(), &["synth", "--days", "2", "--seed", "7"]);
    let b = gridsplit(dir.path(), &["synth", "--days", "2", "--seed", "7"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("localminute,grid,"));
    assert_eq!(stdout(&a).lines().count(), 2 * 96 + 1);
    let c = gridsplit(dir.path(), &["synth", "--days", "2", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridsplit(dir.path(), &["synth", "--days", "2", "--seed", "7", "--bogus"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&gridsplit(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&gridsplit(dir.path(), &["detect", "--quantile", "1.5"])), 1);
    assert_eq!(code(&gridsplit(dir.path(), &["--help"])), 0);
}

#[test]
fn data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "localminute,grid\n2018-01-01 00:00:00,oops\n").unwrap();
    assert_eq!(code(&gridsplit(dir.path(), &["stats", "corr", "--input", "bad.csv"])), 3);
    assert_eq!(code(&gridsplit(dir.path(), &["detect", "--quantile", "0.99"])), 3);
}

#[test]
fn bench_lists_every_cipher_and_mask() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridsplit(dir.path(), &["bench", "--payload-mib", "0.0625"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("reports/bench.csv")).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["mask", "aes128-ctr", "simon64/128-ctr", "speck64/128-ctr"]);
    for n in &names {
        assert!(stdout(&o).contains(n));
    }
}

#[test]
fn inject_writes_sidecar_and_rejects_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&gridsplit(d, &["synth", "--days", "3", "--seed", "1", "--out", "c.csv"])), 0);
    let args = ["inject", "--alpha", "0.3", "--start", "100", "--duration", "20"];
    let o = gridsplit(d, &[&args[..], &["--input", "c.csv", "--out", "t.csv", "--sidecar", "t.ep"]].concat());
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(d.join("t.ep")).unwrap().trim(), "alpha=0.3 start=100 duration=20");
    let again = ["inject", "--alpha", "0.1", "--start", "110", "--duration", "5"];
    let o = gridsplit(d, &[&again[..], &["--input", "t.csv", "--sidecar", "t.ep"]].concat());
    assert_eq!(code(&o), 3);

    let clean = fs::read_to_string(d.join("c.csv")).unwrap();
    let theft = fs::read_to_string(d.join("t.csv")).unwrap();
    let grid = |s: &str, row: usize| -> f64 { s.lines().nth(row + 1).unwrap().split(',').nth(1).unwrap().parse().unwrap() };
    assert!((grid(&theft, 105) - 0.7 * grid(&clean, 105)).abs() < 1e-12);
    assert_eq!(grid(&theft, 99), grid(&clean, 99));
}

#[test]
fn stats_corr_reports_grid_correlations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gridsplit(d, &["synth", "--days", "14", "--seed", "7", "--out", "s.csv"]);
    let o = gridsplit(d, &["stats", "corr", "--input", "s.csv"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("name,grid,"));
    let summary = fs::read_to_string(d.join("reports/corr.txt")).unwrap();
    assert!(summary.contains("corr(grid, solar) = -"), "{summary}");
}

#[test]
fn train_then_detect_attack_and_auc() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.txt"), SMALL).unwrap();
    let o = gridsplit(d, &["train", "--config", "cfg.txt"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.txt", "client.ckpt", "server.ckpt", "losses.csv"] {
        assert!(d.join("reports/run").join(f).exists(), "{f}");
    }

    let o = gridsplit(d, &["detect", "--quantile", "0.95"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let det = fs::read_to_string(d.join("reports/detections.csv")).unwrap();
    assert!(det.starts_with("end,timestamp,score,verdict,label\n"));

    let o = gridsplit(d, &["eval", "auc", "--levels", "0.1,0.3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let auc = fs::read_to_string(d.join("reports/auc.csv")).unwrap();
    assert_eq!(auc.lines().count(), 3);

    let o = gridsplit(d, &["attack", "--mode", "masked", "--steps", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("reports/attack_masked.txt").exists());
    let o = gridsplit(d, &["attack", "--steps", "100"]);
    assert_eq!(code(&o), 0);
    let trace = fs::read_to_string(d.join("reports/trace.csv")).unwrap();
    assert!(trace.starts_with("index,real,recon_plain,recon_masked\n"));
}

#[test]
fn server_and_client_train_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.txt"), "days=12\nsteps=20\nseed=3\n").unwrap();
    assert_eq!(code(&gridsplit(d, &["keygen", "--out", "keys"])), 0);
    gridsplit(d, &["synth", "--days", "12", "--seed", "3", "--out", "m.csv"]);
    let addr = format!("127.0.0.1:{}", free_port());
    let server = Command::new(env!("CARGO_BIN_EXE_gridsplit"))
        .args(["server", "--listen", &addr, "--keys", "keys/server.keys", "--config", "cfg.txt"])
        .current_dir(d)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut client = None;
    for _ in 0..50 {
        let o = gridsplit(
            d,
            &["client", "--connect", &addr, "--keys", "keys/client.keys", "--data", "m.csv", "--config", "cfg.txt"],
        );
        if code(&o) == 2 && String::from_utf8_lossy(&o.stderr).contains("refused") {
            thread::sleep(Duration::from_millis(100));
            continue;
        }
        client = Some(o);
        break;
    }
    let client = client.expect("server never came up");
    assert_eq!(code(&client), 0, "{}", String::from_utf8_lossy(&client.stderr));
    let s = server.wait_with_output().unwrap();
    assert_eq!(code(&s), 0, "{}", String::from_utf8_lossy(&s.stderr));
    assert!(stdout(&s).contains("trained 20 batches"));
    assert!(d.join("reports/client/scores.csv").exists());
}

#[test]
fn unregistered_client_aborts_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gridsplit(d, &["keygen", "--out", "a"]);
    gridsplit(d, &["keygen", "--out", "b"]);
    gridsplit(d, &["synth", "--days", "12", "--seed", "3", "--out", "m.csv"]);
    fs::write(d.join("cfg.txt"), "days=12\nsteps=5\n").unwrap();
    // b's client key is unknown to a's server, and b's client trusts another server key
    let addr = format!("127.0.0.1:{}", free_port());
    let server = Command::new(env!("CARGO_BIN_EXE_gridsplit"))
        .args(["server", "--listen", &addr, "--keys", "a/server.keys", "--config", "cfg.txt"])
        .current_dir(d)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut o = None;
    for _ in 0..50 {
        let r = gridsplit(
            d,
            &["client", "--connect", &addr, "--keys", "b/client.keys", "--data", "m.csv", "--config", "cfg.txt"],
        );
        if String::from_utf8_lossy(&r.stderr).contains("refused") {
            thread::sleep(Duration::from_millis(100));
            continue;
        }
        o = Some(r);
        break;
    }
    assert_eq!(code(&o.expect("server never came up")), 2);
    let s = server.wait_with_output().unwrap();
    assert_eq!(code(&s), 2, "{}", String::from_utf8_lossy(&s.stderr));
}
