//! Schema-compatible synthetic household load.
//!
//! Appliance channels follow daily and weekly routines with Gaussian noise
//! and random appliance events; `solar` follows a clear-sky curve scaled by
//! daily cloud cover. The meter total is
//! `grid = Σ appliances − solar + baseline`, where `baseline` is an
//! unobserved AR(1) load (always-on devices, losses) that keeps the grid
//! only partly predictable from the appliance channels.

use super::series::{MeterSeries, STEP_MINUTES};
use super::DataError;
use chrono::{Datelike, Duration, NaiveDate, Weekday};
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const CHANNELS: [&str; 8] = [
    "air1",
    "furnace1",
    "refrigerator1",
    "oven1",
    "clotheswasher1",
    "dishwasher1",
    "lights_plugs1",
    "solar",
];

pub const STEPS_PER_DAY: usize = (24 * 60 / STEP_MINUTES) as usize;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    pub days: usize,
    pub households: usize,
    pub start: NaiveDate,
    /// Innovation standard deviation of the hidden baseline, kW.
    pub baseline_noise: f64,
    /// AR(1) coefficient of the hidden baseline.
    pub baseline_ar: f64,
    pub solar_peak: f64,
}

impl SynthConfig {
    pub fn new(seed: u64, days: usize, households: usize) -> Self {
        SynthConfig {
            seed,
            days,
            households,
            start: NaiveDate::from_ymd_opt(2018, 6, 1).expect("valid date"),
            baseline_noise: 0.05,
            baseline_ar: 0.8,
            solar_peak: 0.8,
        }
    }
}

pub struct Synth {
    pub series: MeterSeries,
    /// The hidden load added to the grid total, per step.
    pub baseline: Vec<f64>,
}

pub fn synth(seed: u64, days: usize, households: usize) -> Result<Synth, DataError> {
    synth_with(&SynthConfig::new(seed, days, households))
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    (-((hour - center) / width).powi(2)).exp()
}

pub fn synth_with(cfg: &SynthConfig) -> Result<Synth, DataError> {
    if cfg.days == 0 || cfg.households == 0 {
        return Err(DataError::Range("days and households must be at least 1".into()));
    }
    let n = cfg.days * STEPS_PER_DAY;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chans: Vec<Vec<f64>> = vec![vec![0.0; n]; CHANNELS.len()];
    let mut baseline = vec![0.0; n];
    let std = |s: f64| Normal::new(0.0, s).expect("positive std");
    let t0 = cfg.start.and_hms_opt(0, 0, 0).expect("midnight");

    for _ in 0..cfg.households {
        let scale = rng.gen_range(0.7..1.3);
        let fridge_phase = rng.gen_range(0..8);
        let ac_setpoint = rng.gen_range(24.0..27.0);
        let mut b = 0.0;
        for day in 0..cfg.days {
            let date = cfg.start + Duration::days(day as i64);
            let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
            let warm = 29.0 + 3.0 * std(1.0).sample(&mut rng);
            let cloud = rng.gen_range(0.4..1.0);
            let dinner = rng.gen_bool(0.7).then(|| rng.gen_range(68..76));
            let breakfast = rng.gen_bool(0.3).then(|| rng.gen_range(26..34));
            let dishes = rng.gen_bool(0.5).then(|| rng.gen_range(78..86));
            let laundry = rng.gen_bool(if weekend { 0.6 } else { 0.15 }).then(|| rng.gen_range(36..64));
            for slot in 0..STEPS_PER_DAY {
                let t = day * STEPS_PER_DAY + slot;
                let hour = slot as f64 / 4.0;
                let temp = warm - 6.0 + 6.0 * bump(hour, 16.0, 5.0);
                let air = (0.3 * (temp - ac_setpoint)).max(0.0) * scale + std(0.03).sample(&mut rng).abs();
                let furnace = 0.04 + if air > 0.1 { 0.12 } else { 0.0 };
                let cycle = (t + fridge_phase) % 8 < 3;
                let fridge = 0.08 + if cycle { 0.12 } else { 0.0 } + std(0.01).sample(&mut rng).abs();
                let oven = [dinner.map(|s| (s, 5, 2.2)), breakfast.map(|s| (s, 2, 1.5))]
                    .into_iter()
                    .flatten()
                    .find(|&(s, len, _)| slot >= s && slot < s + len)
                    .map_or(0.0, |(_, _, kw)| kw);
                let washer = laundry.filter(|&s| slot >= s && slot < s + 3).map_or(0.0, |_| 0.5);
                let dish = dishes.filter(|&s| slot >= s && slot < s + 4).map_or(0.0, |_| 1.1);
                let weekend_day = if weekend { 0.15 * bump(hour, 13.0, 3.0) } else { 0.0 };
                let lights = scale * (0.12 + 0.45 * bump(hour, 20.5, 2.0) + 0.2 * bump(hour, 7.0, 1.0) + weekend_day)
                    + std(0.03).sample(&mut rng).abs();
                let sun = if (6.0..19.0).contains(&hour) {
                    (std::f64::consts::PI * (hour - 6.0) / 13.0).sin()
                } else {
                    0.0
                };
                let solar = (cfg.solar_peak * scale * sun * cloud * (1.0 + std(0.1).sample(&mut rng))).max(0.0);
                b = cfg.baseline_ar * b + std(cfg.baseline_noise).sample(&mut rng);
                let vals = [air, furnace, fridge, oven, washer, dish, lights, solar];
                for (c, v) in chans.iter_mut().zip(vals) {
                    c[t] += v;
                }
                baseline[t] += 0.3 * scale + b;
            }
        }
    }

    let solar_idx = CHANNELS.len() - 1;
    let mut grid = vec![0.0; n];
    for t in 0..n {
        let consumption: f64 = (0..solar_idx).map(|c| chans[c][t]).sum();
        let solar = chans[solar_idx][t];
        // clean meters never report negative consumption
        baseline[t] = baseline[t].max(solar - consumption);
        grid[t] = consumption - solar + baseline[t];
    }

    let channels: IndexMap<String, Vec<f64>> = CHANNELS.iter().map(|s| s.to_string()).zip(chans).collect();
    let series = MeterSeries {
        timestamps: (0..n).map(|i| t0 + Duration::minutes(STEP_MINUTES * i as i64)).collect(),
        channels,
        grid,
        labels: vec![false; n],
        episodes: Vec::new(),
    };
    Ok(Synth { series, baseline })
}
