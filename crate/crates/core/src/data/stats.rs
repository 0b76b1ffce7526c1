//! Pearson correlation over the grid and appliance columns.

use super::series::MeterSeries;
use super::DataError;
use std::fmt::Write as _;

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    if sa == 0.0 || sb == 0.0 {
        return None;
    }
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    Some((cov / (sa * sb)).clamp(-1.0, 1.0))
}

/// Sample autocorrelation at `lag`; `None` for constant or too-short input.
pub fn autocorrelation(v: &[f64], lag: usize) -> Option<f64> {
    if lag >= v.len() {
        return None;
    }
    let (m, s) = mean_std(v);
    if s == 0.0 {
        return None;
    }
    let num: f64 = v.iter().zip(&v[lag..]).map(|(a, b)| (a - m) * (b - m)).sum();
    Some(num / (v.len() as f64 * s * s))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrMatrix {
    pub names: Vec<String>,
    /// Row-major `names.len()²` coefficients.
    pub values: Vec<f64>,
    /// Constant columns left out of the matrix.
    pub excluded: Vec<String>,
}

impl CorrMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i * self.names.len() + j])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name");
        for n in &self.names {
            let _ = write!(s, ",{n}");
        }
        s.push('\n');
        let k = self.names.len();
        for (i, n) in self.names.iter().enumerate() {
            s.push_str(n);
            for v in &self.values[i * k..(i + 1) * k] {
                let _ = write!(s, ",{v:.6}");
            }
            s.push('\n');
        }
        s
    }
}

/// Grid first, then channels in series order.
pub fn correlation_matrix(series: &MeterSeries) -> Result<CorrMatrix, DataError> {
    if series.len() < 2 {
        return Err(DataError::Range("correlation needs at least 2 timesteps".into()));
    }
    let mut names = Vec::new();
    let mut cols: Vec<&[f64]> = Vec::new();
    let mut excluded = Vec::new();
    let all = std::iter::once(("grid", series.grid.as_slice()))
        .chain(series.channels.iter().map(|(k, v)| (k.as_str(), v.as_slice())));
    for (name, col) in all {
        if mean_std(col).1 == 0.0 {
            log::info!("correlation: constant column {name} excluded");
            excluded.push(name.to_string());
        } else {
            names.push(name.to_string());
            cols.push(col);
        }
    }
    let k = names.len();
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        values[i * k + i] = 1.0;
        for j in i + 1..k {
            let r = pearson(cols[i], cols[j]).expect("non-constant equal-length columns");
            values[i * k + j] = r;
            values[j * k + i] = r;
        }
    }
    Ok(CorrMatrix { names, values, excluded })
}
