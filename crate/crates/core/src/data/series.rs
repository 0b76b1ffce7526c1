use super::DataError;
use chrono::{Duration, NaiveDateTime};
use indexmap::IndexMap;
use std::ops::Range;

pub const STEP_MINUTES: i64 = 15;

/// A theft episode: `grid` under-reported by the fraction `alpha` over
/// `[start, start + duration)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Episode {
    pub alpha: f64,
    pub start: usize,
    pub duration: usize,
}

impl Episode {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.duration
    }
}

/// Readings on a fixed 15-minute grid, in kW.
#[derive(Clone, Debug, PartialEq)]
pub struct MeterSeries {
    pub timestamps: Vec<NaiveDateTime>,
    /// Appliance and generation columns, in file order.
    pub channels: IndexMap<String, Vec<f64>>,
    /// Total consumption reported by the meter.
    pub grid: Vec<f64>,
    pub labels: Vec<bool>,
    pub episodes: Vec<Episode>,
}

impl MeterSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channel_names(&self) -> Vec<&str> {
        self.channels.keys().map(String::as_str).collect()
    }

    /// Checks lengths, spacing and finiteness.
    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.len();
        if self.grid.len() != n || self.labels.len() != n || self.channels.values().any(|c| c.len() != n) {
            return Err(DataError::Range("column lengths differ".into()));
        }
        for w in self.timestamps.windows(2) {
            if w[1] - w[0] != Duration::minutes(STEP_MINUTES) {
                return Err(DataError::Gap {
                    timestamp: w[1].to_string(),
                    minutes: (w[1] - w[0]).num_minutes(),
                });
            }
        }
        let finite = self.grid.iter().chain(self.channels.values().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(DataError::Range("non-finite reading".into()));
        }
        Ok(())
    }

    /// Contiguous sub-series; episodes are clipped and re-based.
    pub fn slice(&self, r: Range<usize>) -> MeterSeries {
        let episodes = self
            .episodes
            .iter()
            .filter_map(|e| {
                let s = e.start.max(r.start);
                let end = (e.start + e.duration).min(r.end);
                (s < end).then(|| Episode {
                    alpha: e.alpha,
                    start: s - r.start,
                    duration: end - s,
                })
            })
            .collect();
        MeterSeries {
            timestamps: self.timestamps[r.clone()].to_vec(),
            channels: self.channels.iter().map(|(k, v)| (k.clone(), v[r.clone()].to_vec())).collect(),
            grid: self.grid[r.clone()].to_vec(),
            labels: self.labels[r].to_vec(),
            episodes,
        }
    }

    /// Chronological split at `frac` of the length.
    pub fn split(&self, frac: f64) -> (MeterSeries, MeterSeries) {
        let cut = ((self.len() as f64) * frac).round() as usize;
        let cut = cut.clamp(0, self.len());
        (self.slice(0..cut), self.slice(cut..self.len()))
    }

    /// SHA-256 over timestamps and every value, hex encoded.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in &self.timestamps {
            h.update(t.and_utc().timestamp().to_le_bytes());
        }
        for (name, vals) in &self.channels {
            h.update(name.as_bytes());
            for v in vals {
                h.update(v.to_le_bytes());
            }
        }
        for v in &self.grid {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
