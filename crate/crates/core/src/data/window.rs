//! Normalization statistics and sliding windows for the model.

use super::series::MeterSeries;
use super::DataError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use chrono::NaiveDateTime;

/// Per-channel mean and standard deviation, fitted on a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub channels: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub grid_mean: f64,
    pub grid_std: f64,
    pub dropped: Vec<String>,
    /// Content hash and time span of the split the statistics came from.
    pub source_hash: String,
    pub source_span: (NaiveDateTime, NaiveDateTime),
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

impl NormStats {
    pub fn fit(train: &MeterSeries) -> Result<NormStats, DataError> {
        if train.len() < 2 {
            return Err(DataError::Range("normalization needs at least 2 timesteps".into()));
        }
        let (grid_mean, grid_std) = moments(&train.grid);
        if grid_std == 0.0 {
            return Err(DataError::Range("grid column is constant".into()));
        }
        let mut out = NormStats {
            channels: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
            grid_mean,
            grid_std,
            dropped: Vec::new(),
            source_hash: train.content_hash(),
            source_span: (train.timestamps[0], train.timestamps[train.len() - 1]),
        };
        for (name, vals) in &train.channels {
            let (m, s) = moments(vals);
            if s > 0.0 {
                out.channels.push(name.clone());
                out.mean.push(m);
                out.std.push(s);
            } else {
                log::info!("normalization: zero-variance channel {name} dropped");
                out.dropped.push(name.clone());
            }
        }
        if out.channels.is_empty() {
            return Err(DataError::Range("no channel has non-zero variance".into()));
        }
        Ok(out)
    }

    pub fn normalize(&self, channel: usize, v: f64) -> f64 {
        (v - self.mean[channel]) / self.std[channel]
    }

    pub fn denormalize(&self, channel: usize, z: f64) -> f64 {
        z * self.std[channel] + self.mean[channel]
    }

    pub fn normalize_grid(&self, v: f64) -> f64 {
        (v - self.grid_mean) / self.grid_std
    }

    pub fn denormalize_grid(&self, z: f64) -> f64 {
        z * self.grid_std + self.grid_mean
    }

    /// Fails if `eval` is the fitting split or overlaps it in time.
    pub fn audit(&self, eval: &MeterSeries) -> Result<(), DataError> {
        if eval.is_empty() {
            return Ok(());
        }
        let (lo, hi) = (eval.timestamps[0], eval.timestamps[eval.len() - 1]);
        if eval.content_hash() == self.source_hash || (lo <= self.source_span.1 && self.source_span.0 <= hi) {
            return Err(DataError::Range("evaluation split overlaps the normalization split".into()));
        }
        Ok(())
    }
}

/// `x: [n, seq, C]` normalized channels, `y: [n, 1]` normalized grid at the
/// window's last step.
#[derive(Clone, Debug)]
pub struct Windows<T> {
    pub x: Tensor<T>,
    pub y: Tensor<T>,
    /// Series index of each window's last step.
    pub ends: Vec<usize>,
    /// Theft label of each window's last step.
    pub labels: Vec<bool>,
}

impl<T: Scalar> Windows<T> {
    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    /// Copies the listed windows into a batch.
    pub fn batch(&self, idx: &[usize]) -> (Tensor<T>, Tensor<T>) {
        let s = self.x.shape();
        let per = s[1] * s[2];
        let mut x = Vec::with_capacity(idx.len() * per);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(&self.x.data()[i * per..(i + 1) * per]);
            y.push(self.y.data()[i]);
        }
        (
            Tensor::new(&[idx.len(), s[1], s[2]], x).expect("batch shape"),
            Tensor::new(&[idx.len(), 1], y).expect("batch shape"),
        )
    }
}

pub fn window_count(len: usize, seq_len: usize, stride: usize) -> usize {
    if seq_len == 0 || stride == 0 || seq_len > len {
        0
    } else {
        (len - seq_len) / stride + 1
    }
}

pub fn windowize<T: Scalar>(
    series: &MeterSeries,
    seq_len: usize,
    stride: usize,
    norm: &NormStats,
) -> Result<Windows<T>, DataError> {
    if seq_len == 0 || stride == 0 {
        return Err(DataError::Range("seq_len and stride must be positive".into()));
    }
    if seq_len > series.len() {
        return Err(DataError::Range(format!(
            "seq_len {seq_len} exceeds series length {}",
            series.len()
        )));
    }
    let cols = norm
        .channels
        .iter()
        .map(|c| {
            series
                .channels
                .get(c)
                .map(Vec::as_slice)
                .ok_or_else(|| DataError::MissingColumn(c.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = window_count(series.len(), seq_len, stride);
    let c = cols.len();
    let mut x = Vec::with_capacity(n * seq_len * c);
    let mut y = Vec::with_capacity(n);
    let mut ends = Vec::with_capacity(n);
    for w in 0..n {
        let start = w * stride;
        for t in start..start + seq_len {
            for (j, col) in cols.iter().enumerate() {
                x.push(T::of(norm.normalize(j, col[t])));
            }
        }
        let end = start + seq_len - 1;
        y.push(T::of(norm.normalize_grid(series.grid[end])));
        ends.push(end);
    }
    let labels = ends.iter().map(|&e| series.labels[e]).collect();
    Ok(Windows {
        x: Tensor::new(&[n, seq_len, c], x).expect("window shape"),
        y: Tensor::new(&[n, 1], y).expect("window shape"),
        ends,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth;

    #[test]
    fn count_and_shapes() {
        let s = synth(1, 2, 1).unwrap().series;
        let norm = NormStats::fit(&s).unwrap();
        let w: Windows<f64> = windowize(&s, 96, 96, &norm).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.x.shape(), &[2, 96, 8]);
        assert_eq!(w.ends, vec![95, 191]);
        assert!(windowize::<f64>(&s, 193, 1, &norm).is_err());
    }

    #[test]
    fn zero_variance_channels_are_dropped() {
        let mut s = synth(1, 14, 1).unwrap().series;
        s.channels.insert("flat".into(), vec![2.0; s.len()]);
        let norm = NormStats::fit(&s).unwrap();
        assert_eq!(norm.dropped, vec!["flat".to_string()]);
        assert!(norm.std.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn audit_rejects_overlap() {
        let s = synth(1, 4, 1).unwrap().series;
        let (train, test) = s.split(0.7);
        let norm = NormStats::fit(&train).unwrap();
        assert!(norm.audit(&test).is_ok());
        assert!(norm.audit(&train).is_err());
        assert!(norm.audit(&s).is_err());
    }
}
