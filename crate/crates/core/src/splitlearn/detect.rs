//! Thresholded detection, threshold calibration and score-drift monitoring.

use super::SplitError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Normal,
    Anomaly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub verdict: Verdict,
    pub score: f64,
}

/// Anomaly iff `score > threshold`.
pub fn classify(score: f64, threshold: f64) -> Detection {
    let verdict = if score > threshold {
        Verdict::Anomaly
    } else {
        Verdict::Normal
    };
    Detection { verdict, score }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn calibrate_threshold(scores_clean: &[f64], quantile: f64) -> Result<f64, SplitError> {
    if scores_clean.is_empty() {
        return Err(SplitError::Config("no clean scores to calibrate on".into()));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(SplitError::Config(format!("quantile {quantile} outside (0, 1]")));
    }
    if scores_clean.iter().any(|s| s.is_nan()) {
        return Err(SplitError::Config("NaN among clean scores".into()));
    }
    let mut v = scores_clean.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * quantile;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriftState {
    Stable,
    Retrain,
}

/// Signals retraining once the mean of each incoming score window stays
/// above `mean + k·σ` of the calibration scores for `w` windows in a row.
#[derive(Clone, Debug)]
pub struct DriftMonitor {
    pub mean: f64,
    pub std: f64,
    pub k: f64,
    pub w: usize,
    run: usize,
}

impl DriftMonitor {
    pub const DEFAULT_K: f64 = 3.0;
    pub const DEFAULT_W: usize = 4;

    pub fn new(calibration: &[f64], k: f64, w: usize) -> Result<Self, SplitError> {
        if calibration.len() < 2 {
            return Err(SplitError::Config("drift calibration needs at least 2 scores".into()));
        }
        if w == 0 || !(k >= 0.0) {
            return Err(SplitError::Config("drift monitor needs w ≥ 1 and k ≥ 0".into()));
        }
        let n = calibration.len() as f64;
        let mean = calibration.iter().sum::<f64>() / n;
        let std = (calibration.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        Ok(DriftMonitor { mean, std, k, w, run: 0 })
    }

    pub fn with_defaults(calibration: &[f64]) -> Result<Self, SplitError> {
        Self::new(calibration, Self::DEFAULT_K, Self::DEFAULT_W)
    }

    pub fn limit(&self) -> f64 {
        self.mean + self.k * self.std
    }

    pub fn observe(&mut self, window: &[f64]) -> DriftState {
        let m = if window.is_empty() {
            f64::NEG_INFINITY
        } else {
            window.iter().sum::<f64>() / window.len() as f64
        };
        self.run = if m > self.limit() { self.run + 1 } else { 0 };
        if self.run >= self.w {
            DriftState::Retrain
        } else {
            DriftState::Stable
        }
    }

    pub fn reset(&mut self) {
        self.run = 0;
    }
}

/// Runs a fresh monitor over consecutive score windows; `Retrain` as soon as
/// any prefix triggers it.
pub fn drift_monitor(calibration: &[f64], windows: &[Vec<f64>], k: f64, w: usize) -> Result<DriftState, SplitError> {
    let mut m = DriftMonitor::new(calibration, k, w)?;
    for win in windows {
        if m.observe(win) == DriftState::Retrain {
            return Ok(DriftState::Retrain);
        }
    }
    Ok(DriftState::Stable)
}
