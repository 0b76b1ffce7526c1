use crate::error::CliError;
use crate::keys;
use crate::rundir;
use crate::AttackMode;
use gridsplit::crypto::bench::bench_ciphers;
use gridsplit::crypto::KeyPair;
use gridsplit::data::{
    autocorrelation, correlation_matrix, ingest_csv, inject_theft, read_csv, read_sidecar, windowize,
    write_csv, write_sidecar, CsvSchema, MeterSeries, Windows, STEPS_PER_DAY,
};
use gridsplit::eval::{
    auc, experiment_auc, intercept, local_sessions, reconstruction_attack, trace_csv, train_on_series, AttackConfig,
    AttackReport, Reports, ScoredSet,
};
use gridsplit::protocol::Mode;
use gridsplit::splitlearn::{calibrate_threshold, classify, LocalRun, Verdict};
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

pub fn keygen(out: &Path, id: &str) -> Result<(), CliError> {
    let client = KeyPair::generate(&mut OsRng);
    let server = KeyPair::generate(&mut OsRng);
    keys::generate(out, id, &client, &server)?;
    println!("wrote {0}/client.keys and {0}/server.keys", out.display());
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn read_input(input: Option<&Path>) -> Result<MeterSeries, CliError> {
    Ok(match input {
        Some(p) => ingest_csv(p, &CsvSchema::default())?,
        None => {
            let mut buf = Vec::new();
            io::stdin().lock().read_to_end(&mut buf)?;
            read_csv(buf.as_slice(), &CsvSchema::default())?
        }
    })
}

pub fn synth(days: usize, seed: u64, households: usize, out: Option<&Path>) -> Result<(), CliError> {
    let s = gridsplit::data::synth(seed, days, households)?;
    let mut buf = Vec::new();
    write_csv(&s.series, &mut buf)?;
    emit(out, &buf)
}

pub fn inject(
    alpha: f64,
    start: usize,
    duration: usize,
    input: Option<&Path>,
    out: Option<&Path>,
    sidecar: Option<&Path>,
) -> Result<(), CliError> {
    let mut s = read_input(input)?;
    if let Some(p) = sidecar.filter(|p| p.exists()) {
        // already applied to the CSV; restore labels and overlap bookkeeping
        for e in read_sidecar(&fs::read_to_string(p)?)? {
            if e.start + e.duration > s.len() {
                return Err(CliError::Data(format!("{}: episode beyond the series", p.display())));
            }
            s.labels[e.range()].iter_mut().for_each(|l| *l = true);
            s.episodes.push(e);
        }
    }
    let t = inject_theft(&s, alpha, start, duration)?;
    let mut buf = Vec::new();
    write_csv(&t, &mut buf)?;
    emit(out, &buf)?;
    if let Some(p) = sidecar {
        fs::write(p, write_sidecar(&t.episodes))?;
    }
    Ok(())
}

pub fn train(config: Option<&Path>, data: Option<&Path>, run: &Path) -> Result<(), CliError> {
    let cfg = rundir::load_config(config)?;
    let series = rundir::load_series(data, &cfg)?;
    let t = std::time::Instant::now();
    let trained = train_on_series(series, &cfg)?;
    rundir::save(run, &trained, data)?;
    let last = trained.losses.last();
    println!(
        "trained {} steps in {:.1}s; final l_rec {:.5} l_adv {:.5}; run saved to {}",
        trained.losses.len(),
        t.elapsed().as_secs_f64(),
        last.map_or(f64::NAN, |r| r.l_rec),
        last.map_or(f64::NAN, |r| r.l_adv),
        run.display()
    );
    Ok(())
}

fn connect(trained: &gridsplit::eval::Trained, mode: Mode) -> Result<LocalRun<f32>, CliError> {
    let cfg = &trained.config;
    let session = gridsplit::protocol::SessionConfig {
        mode,
        ..cfg.session()
    };
    let (c, s) = local_sessions(cfg.seed, &session);
    let mut rng = ChaCha20Rng::from_rng(OsRng).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(LocalRun::connect(c, s, &trained.params, &cfg.train, &mut rng)?)
}

pub fn detect(
    quantile: f64,
    run_dir: &Path,
    data: Option<&Path>,
    sidecar: Option<&Path>,
    reports: &Path,
) -> Result<(), CliError> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(CliError::Usage(format!("--quantile {quantile} outside (0, 1]")));
    }
    let t = &rundir::load(run_dir)?;
    let cfg = &t.config;
    let mut run = connect(t, cfg.mode)?;

    let clean: Windows<f32> = windowize(&t.test, cfg.train.seq_len, cfg.test_stride, &t.norm)?;
    let threshold = calibrate_threshold(&run.score_windows(&clean, cfg.score_batch)?, quantile)?;

    let screen = match data {
        Some(p) => {
            let mut s = ingest_csv(p, &CsvSchema::default())?;
            if let Some(sc) = sidecar {
                for e in read_sidecar(&fs::read_to_string(sc)?)? {
                    if e.start + e.duration > s.len() {
                        return Err(CliError::Data(format!("{}: episode beyond the series", sc.display())));
                    }
                    s.labels[e.range()].iter_mut().for_each(|l| *l = true);
                }
            }
            let (_, test) = s.split(cfg.train_frac);
            t.norm.audit(&test)?;
            test
        }
        None => t.test.clone(),
    };
    let w: Windows<f32> = windowize(&screen, cfg.train.seq_len, cfg.test_stride, &t.norm)?;
    let scores = run.score_windows(&w, cfg.score_batch)?;

    let mut csv = String::from("end,timestamp,score,verdict,label\n");
    let mut flagged = 0;
    for (i, &s) in scores.iter().enumerate() {
        let d = classify(s, threshold);
        let anomaly = d.verdict == Verdict::Anomaly;
        flagged += anomaly as usize;
        let end = w.ends[i];
        let _ = writeln!(
            csv,
            "{end},{},{s},{},{}",
            screen.timestamps[end].format("%Y-%m-%dT%H:%M:%S"),
            if anomaly { "anomaly" } else { "normal" },
            w.labels[i] as u8
        );
    }
    let mut summary = format!(
        "quantile {quantile} threshold {threshold:.6}\nwindows {} flagged {flagged}\n",
        scores.len()
    );
    let set = ScoredSet::new(scores, w.labels.clone())?;
    if let Ok(a) = auc(&set) {
        let _ = writeln!(summary, "auc {a:.4} (theft windows {})", set.positives());
    }
    let rep = Reports::new(reports)?;
    rep.write("detections.csv", &csv)?;
    rep.write("detect.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn attack(mode: AttackMode, run_dir: &Path, steps: usize, reports: &Path) -> Result<(), CliError> {
    let t = &rundir::load(run_dir)?;
    let cfg = AttackConfig {
        steps,
        seed: t.config.seed,
        ..AttackConfig::default()
    };
    let rep = Reports::new(reports)?;
    let run_one = |m: Mode, salt: u64| -> Result<AttackReport, CliError> {
        let r = reconstruction_attack(&intercept(t, m, salt)?, m, &cfg)?;
        let name = if m == Mode::Plain { "plain" } else { "masked" };
        rep.write(&format!("attack_{name}.csv"), &r.r2_csv())?;
        rep.write(&format!("attack_{name}.txt"), &r.summary())?;
        print!("{}", r.summary());
        Ok(r)
    };
    match mode {
        AttackMode::Plain => {
            run_one(Mode::Plain, 10)?;
        }
        AttackMode::Masked => {
            run_one(Mode::Masked, 11)?;
        }
        AttackMode::Both => {
            let p = run_one(Mode::Plain, 10)?;
            let m = run_one(Mode::Masked, 11)?;
            let path = rep.write("trace.csv", &trace_csv(&p, &m)?)?;
            println!("trace written to {}", path.display());
        }
    }
    Ok(())
}

pub fn eval_auc(levels: &[f64], run_dir: &Path, reports: &Path) -> Result<(), CliError> {
    if levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(CliError::Usage("--levels must lie in [0, 1]".into()));
    }
    let table = experiment_auc(&rundir::load(run_dir)?, levels)?;
    let rep = Reports::new(reports)?;
    rep.write("auc.csv", &table.to_csv())?;
    rep.write("auc.txt", &table.render())?;
    print!("{}", table.render());
    Ok(())
}

pub fn bench(payload_mib: f64, reports: &Path) -> Result<(), CliError> {
    if !(payload_mib > 0.0 && payload_mib.is_finite()) {
        return Err(CliError::Usage(format!("--payload-mib {payload_mib} must be positive")));
    }
    let bytes = (payload_mib * 1024.0 * 1024.0).round() as usize;
    let report = bench_ciphers(bytes).map_err(|e| CliError::Usage(e.to_string()))?;
    let rep = Reports::new(reports)?;
    rep.write("bench.csv", &report.to_csv())?;
    rep.write("bench.txt", &report.render())?;
    print!("{}", report.render());
    Ok(())
}

pub fn stats_corr(input: Option<&Path>, reports: &Path) -> Result<(), CliError> {
    let s = read_input(input)?;
    let m = correlation_matrix(&s)?;
    let rep = Reports::new(reports)?;
    rep.write("corr.csv", &m.to_csv())?;
    let mut summary = String::new();
    for name in m.names.iter().skip(1) {
        if let Some(r) = m.get("grid", name) {
            let _ = writeln!(summary, "corr(grid, {name}) = {r:+.4}");
        }
    }
    for name in &m.excluded {
        let _ = writeln!(summary, "{name}: constant, excluded");
    }
    match autocorrelation(&s.grid, STEPS_PER_DAY) {
        Some(a) => {
            let _ = writeln!(summary, "grid lag-{STEPS_PER_DAY} autocorrelation = {a:.4}");
        }
        None => {
            let _ = writeln!(summary, "grid lag-{STEPS_PER_DAY} autocorrelation undefined");
        }
    }
    rep.write("corr.txt", &summary)?;
    print!("{}", m.to_csv());
    eprint!("{summary}");
    Ok(())
}
