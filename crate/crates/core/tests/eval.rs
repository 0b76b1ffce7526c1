use gridsplit::eval::{
    auc, experiment_auc, intercept, r2, reconstruction_attack, reconstruction_attack_across, trace_csv,
    train_detector, AttackConfig, EvalError, ExperimentConfig, ScoredSet,
};
use gridsplit::protocol::Mode;
use gridsplit::splitlearn::RunManifest;
use proptest::prelude::*;
use std::sync::OnceLock;

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut hits, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                hits += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    hits / pairs
}

fn reference_r2(y: &[f64], p: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mse = y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let m2 = y.iter().map(|a| a * a).sum::<f64>() / n;
    let m = y.iter().sum::<f64>() / n;
    1.0 - mse / (m2 - m * m)
}

proptest! {
    #[test]
    fn auc_matches_pair_count(
        data in prop::collection::vec((0u8..20, any::<bool>()), 2..200)
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 4.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        let set = ScoredSet::new(scores.clone(), labels.clone()).unwrap();
        let pos = set.positives();
        if pos == 0 || pos == labels.len() {
            prop_assert!(matches!(auc(&set), Err(EvalError::SingleClass)));
        } else {
            prop_assert!((auc(&set).unwrap() - brute_auc(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn r2_matches_reference(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..100)
    ) {
        let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let v = r2(&y, &p).unwrap();
        prop_assert!((v - reference_r2(&y, &p)).abs() < 1e-9 * (1.0 + v.abs()));
        prop_assert!(v <= 1.0);
    }
}

fn quick_config() -> ExperimentConfig {
    let mut m = RunManifest::new();
    m.set("days", 24).set("steps", 400).set("seed", 3);
    ExperimentConfig::from_manifest(&m).unwrap()
}

fn trained() -> &'static gridsplit::eval::Trained {
    static T: OnceLock<gridsplit::eval::Trained> = OnceLock::new();
    T.get_or_init(|| train_detector(&quick_config()).unwrap())
}

#[test]
fn config_manifest_round_trip() {
    let c = quick_config();
    assert_eq!(ExperimentConfig::from_manifest(&c.to_manifest()).unwrap(), c);
    let mut bad = RunManifest::new();
    bad.set("mode", "loud");
    assert!(ExperimentConfig::from_manifest(&bad).is_err());
}

#[test]
fn zero_theft_control_is_chance() {
    let table = experiment_auc(trained(), &[0.0, 0.3]).unwrap();
    let control = table.get(0.0).unwrap().auc;
    assert!((control - 0.5).abs() <= 0.05, "control AUC {control}");
    assert!(table.get(0.3).unwrap().auc > control);
    assert!(table.to_csv().starts_with("level,auc,positives,negatives,above_q99\n"));
}

#[test]
fn masked_payloads_resist_reconstruction() {
    let t = trained();
    let cfg = AttackConfig {
        steps: 800,
        ..AttackConfig::default()
    };
    let plain = reconstruction_attack(&intercept(t, Mode::Plain, 10).unwrap(), Mode::Plain, &cfg).unwrap();
    let masked = reconstruction_attack(&intercept(t, Mode::Masked, 11).unwrap(), Mode::Masked, &cfg).unwrap();
    assert!(masked.mean_r2 <= plain.mean_r2, "{} vs {}", masked.mean_r2, plain.mean_r2);
    assert!(masked.mean_r2 <= 0.1, "masked R² {}", masked.mean_r2);

    let csv = trace_csv(&plain, &masked).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("index,real,recon_plain,recon_masked"));
    assert_eq!(lines.count(), plain.trace_real.len());
}

#[test]
fn cross_session_masks_do_not_transfer() {
    let t = trained();
    let cfg = AttackConfig {
        steps: 800,
        ..AttackConfig::default()
    };
    let a = intercept(t, Mode::Masked, 20).unwrap();
    let b = intercept(t, Mode::Masked, 21).unwrap();
    let rep = reconstruction_attack_across(&a, &b, Mode::Masked, &cfg).unwrap();
    assert!(rep.mean_r2 <= 0.1, "cross-session R² {}", rep.mean_r2);
}

#[test]
fn few_auxiliary_pairs_warn() {
    let t = trained();
    let data = intercept(t, Mode::Plain, 30).unwrap();
    let cfg = AttackConfig {
        steps: 50,
        aux_fraction: 0.15,
        ..AttackConfig::default()
    };
    let rep = reconstruction_attack(&data, Mode::Plain, &cfg).unwrap();
    assert!(rep.aux_pairs < 100);
    assert!(rep.warnings.iter().any(|w| w.contains("auxiliary")), "{:?}", rep.warnings);

    let cfg = AttackConfig {
        aux_fraction: 0.7,
        ..cfg
    };
    let full = reconstruction_attack(&data, Mode::Plain, &cfg).unwrap();
    assert!(full.aux_pairs >= 100);
    assert!(full.warnings.iter().all(|w| !w.contains("auxiliary")));
}
