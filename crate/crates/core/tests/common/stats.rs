//! Statistical oracles: chi-square uniformity, Pearson correlation and
//! byte entropy, computed directly from their textbook definitions.

/// Upper 1% point of χ² with `df` degrees of freedom (Wilson–Hilferty).
pub fn chi2_critical_01(df: usize) -> f64 {
    let k = df as f64;
    let z = 2.326_347_874;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

/// χ² statistic of `values` against the uniform distribution on 256 buckets.
pub fn chi2_256(values: impl IntoIterator<Item = u8>) -> f64 {
    let mut counts = [0u64; 256];
    let mut n = 0u64;
    for v in values {
        counts[v as usize] += 1;
        n += 1;
    }
    let e = n as f64 / 256.0;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

pub fn passes_uniformity(values: impl IntoIterator<Item = u8>) -> bool {
    chi2_256(values) < chi2_critical_01(255)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Shannon entropy in bits per byte.
pub fn entropy(bytes: &[u8]) -> f64 {
    let mut counts = [0u64; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}
