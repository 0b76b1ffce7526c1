mod common;

use gridsplit::data::{
    apply_episodes, autocorrelation, correlation_matrix, inject_theft, pearson, read_csv, read_sidecar, synth,
    window_count, windowize, write_csv, write_sidecar, CsvSchema, NormStats, Windows, STEPS_PER_DAY,
};
use proptest::prelude::*;

#[test]
fn daily_autocorrelation_is_strong() {
    let s = synth(7, 28, 3).unwrap().series;
    let ac = autocorrelation(&s.grid, STEPS_PER_DAY).unwrap();
    assert!(ac > 0.5, "lag-96 autocorrelation {ac}");
}

#[test]
fn solar_offsets_grid_draw() {
    let s = synth(7, 28, 3).unwrap().series;
    let r = pearson(&s.channels["solar"], &s.grid).unwrap();
    assert!(r < 0.0, "corr(solar, grid) = {r}");
    let m = correlation_matrix(&s).unwrap();
    assert!((m.get("grid", "solar").unwrap() - r).abs() < 1e-12);
    assert!((m.get("grid", "grid").unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn pearson_matches_oracle_and_extremes() {
    let s = synth(3, 7, 2).unwrap().series;
    let (a, b) = (&s.channels["air1"], &s.grid);
    assert!((pearson(a, b).unwrap() - common::stats::pearson(a, b)).abs() < 1e-12);
    assert!((pearson(b, b).unwrap() - 1.0).abs() < 1e-12);
    let neg: Vec<f64> = b.iter().map(|v| -v).collect();
    assert!((pearson(b, &neg).unwrap() + 1.0).abs() < 1e-12);
    assert!(pearson(&[1.0; 10], b).is_none());
}

#[test]
fn csv_round_trip_is_exact() {
    let s = synth(5, 3, 1).unwrap().series;
    let mut buf = Vec::new();
    write_csv(&s, &mut buf).unwrap();
    let back = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
    assert_eq!(back.timestamps, s.timestamps);
    assert_eq!(back.grid, s.grid);
    assert_eq!(back.channels, s.channels);
}

#[test]
fn csv_rejects_gaps_and_bad_numbers() {
    let gap = "localminute,grid,air1\n2018-01-01 00:00:00,1,0\n2018-01-01 00:45:00,1,0\n";
    assert!(read_csv(gap.as_bytes(), &CsvSchema::default()).is_err());
    let bad = "localminute,grid,air1\n2018-01-01 00:00:00,x,0\n";
    let err = read_csv(bad.as_bytes(), &CsvSchema::default()).unwrap_err();
    assert!(err.to_string().contains("row 2"), "{err}");
}

#[test]
fn sidecar_replays_injection() {
    let s = synth(2, 4, 1).unwrap().series;
    let t = inject_theft(&s, 0.2, 10, 48).unwrap();
    let t = inject_theft(&t, 0.3, 100, 96).unwrap();
    let eps = read_sidecar(&write_sidecar(&t.episodes)).unwrap();
    assert_eq!(apply_episodes(&s, &eps).unwrap(), t);
}

#[test]
fn normalization_refuses_its_own_split() {
    let s = synth(2, 10, 1).unwrap().series;
    let (train, test) = s.split(0.7);
    let norm = NormStats::fit(&train).unwrap();
    assert!(norm.audit(&test).is_ok());
    assert!(norm.audit(&train).is_err());
    assert!(norm.audit(&s).is_err());
}

#[test]
fn window_labels_follow_the_last_step() {
    let s = synth(2, 3, 1).unwrap().series;
    let norm = NormStats::fit(&s).unwrap();
    let t = inject_theft(&s, 0.5, 50, 10).unwrap();
    let w: Windows<f64> = windowize(&t, 8, 1, &norm).unwrap();
    for (i, &e) in w.ends.iter().enumerate() {
        assert_eq!(w.labels[i], (50..60).contains(&e));
        assert_eq!(e, i + 7);
        assert!((norm.denormalize_grid(w.y.data()[i]) - t.grid[e]).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_count_matches_enumeration(len in 0usize..400, seq in 1usize..100, stride in 1usize..50) {
        let mut n = 0;
        let mut start = 0;
        while start + seq <= len {
            n += 1;
            start += stride;
        }
        prop_assert_eq!(window_count(len, seq, stride), n);
    }

    #[test]
    fn normalization_round_trips(seed in 0u64..1000, v in -50.0f64..50.0) {
        let s = synth(seed, 14, 1).unwrap().series;
        let norm = NormStats::fit(&s).unwrap();
        for j in 0..norm.channels.len() {
            prop_assert!((norm.denormalize(j, norm.normalize(j, v)) - v).abs() < 1e-6);
        }
        prop_assert!((norm.denormalize_grid(norm.normalize_grid(v)) - v).abs() < 1e-6);
    }

    #[test]
    fn injection_scales_grid_linearly(alpha in 0.0f64..=1.0, start in 0usize..90, dur in 1usize..96) {
        let s = synth(11, 2, 1).unwrap().series;
        let t = inject_theft(&s, alpha, start, dur).unwrap();
        for i in 0..s.len() {
            if (start..start + dur).contains(&i) {
                prop_assert!((t.grid[i] - (1.0 - alpha) * s.grid[i]).abs() <= 1e-12 * s.grid[i].abs().max(1.0));
                prop_assert!(t.labels[i]);
            } else {
                prop_assert_eq!(t.grid[i], s.grid[i]);
                prop_assert!(!t.labels[i]);
            }
        }
        prop_assert_eq!(&t.channels, &s.channels);
    }

    #[test]
    fn overlapping_reinjection_is_rejected(start in 0usize..90, dur in 1usize..50, off in 0usize..50) {
        let s = synth(11, 2, 1).unwrap().series;
        let t = inject_theft(&s, 0.1, start, dur).unwrap();
        let again = start + off % dur;
        prop_assert!(inject_theft(&t, 0.2, again, 1).is_err());
    }
}
