//! Consumption under-reporting and its plain-text sidecar.

use super::series::{Episode, MeterSeries};
use super::DataError;
use std::fmt::Write as _;

/// `grid[t] ← (1−α)·grid[t]` over `[start, start + duration)`; appliance
/// channels stay untouched. Overlapping an earlier episode is rejected.
pub fn inject_theft(series: &MeterSeries, alpha: f64, start: usize, duration: usize) -> Result<MeterSeries, DataError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DataError::Range(format!("alpha {alpha} outside [0, 1]")));
    }
    let end = start
        .checked_add(duration)
        .filter(|&e| e <= series.len() && duration > 0)
        .ok_or_else(|| DataError::Range(format!("episode {start}+{duration} outside series of {}", series.len())))?;
    let ep = Episode { alpha, start, duration };
    if series.episodes.iter().any(|e| e.start < end && start < e.start + e.duration) {
        return Err(DataError::Overlap);
    }
    let mut out = series.clone();
    for t in start..end {
        out.grid[t] *= 1.0 - alpha;
        out.labels[t] = true;
    }
    out.episodes.push(ep);
    Ok(out)
}

/// One line per episode: `alpha=… start=… duration=…`.
pub fn write_sidecar(episodes: &[Episode]) -> String {
    let mut s = String::new();
    for e in episodes {
        let _ = writeln!(s, "alpha={} start={} duration={}", e.alpha, e.start, e.duration);
    }
    s
}

pub fn read_sidecar(text: &str) -> Result<Vec<Episode>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| DataError::Sidecar { line: i + 1, msg };
        let (mut alpha, mut start, mut duration) = (None, None, None);
        for kv in line.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("expected key=value, got {kv:?}")))?;
            let bad = |_| err(format!("bad value for {k}: {v:?}"));
            match k {
                "alpha" => alpha = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "start" => start = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "duration" => duration = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(err(format!("unknown key {k:?}"))),
            }
        }
        match (alpha, start, duration) {
            (Some(alpha), Some(start), Some(duration)) => out.push(Episode { alpha, start, duration }),
            _ => return Err(err("alpha, start and duration are all required".into())),
        }
    }
    Ok(out)
}

/// Re-applies sidecar episodes to a clean series.
pub fn apply_episodes(series: &MeterSeries, episodes: &[Episode]) -> Result<MeterSeries, DataError> {
    episodes
        .iter()
        .try_fold(series.clone(), |s, e| inject_theft(&s, e.alpha, e.start, e.duration))
}
