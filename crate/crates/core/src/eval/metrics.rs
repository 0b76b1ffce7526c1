use super::EvalError;

/// Anomaly scores with their binary theft labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self, EvalError> {
        if scores.len() != labels.len() {
            return Err(EvalError::Input(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn push(&mut self, score: f64, label: bool) {
        self.scores.push(score);
        self.labels.push(label);
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Mann–Whitney AUC with midranks for ties.
pub fn auc(set: &ScoredSet) -> Result<f64, EvalError> {
    if set.scores.len() != set.labels.len() {
        return Err(EvalError::Input("scores and labels differ in length".into()));
    }
    if set.scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::Input("NaN score".into()));
    }
    let n_pos = set.positives();
    let n_neg = set.labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..set.scores.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| set.labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// `1 − SS_res / SS_tot`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64, EvalError> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(EvalError::Input(format!(
            "r2 needs equal nonzero lengths, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ConstantTarget);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
