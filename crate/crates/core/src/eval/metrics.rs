use std::fmt;

use serde::Serialize;

use crate::{Error, Result};

/// Confusion counts with poor outcome (label 1) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Thresholds probabilities; `p >= threshold` is classed positive.
    pub fn from_predictions(probs: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&p, &y) in probs.iter().zip(labels) {
            match (p >= threshold, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// The reported metrics, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Auc,
    Mae,
    Accuracy,
    Specificity,
    Sensitivity,
    F1,
    MaeHard,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Auc,
        Metric::Mae,
        Metric::Accuracy,
        Metric::Specificity,
        Metric::Sensitivity,
        Metric::F1,
        Metric::MaeHard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::Mae => "mae",
            Metric::Accuracy => "accuracy",
            Metric::Specificity => "specificity",
            Metric::Sensitivity => "sensitivity",
            Metric::F1 => "f1",
            Metric::MaeHard => "mae_hard",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Metrics of one prediction set. Rates whose denominator is zero (for
/// example sensitivity with no positives, or AUC with one class) are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub auc: f64,
    /// Mean absolute error of the continuous probabilities.
    pub mae: f64,
    pub accuracy: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub f1: f64,
    /// Mean absolute error of the thresholded classes.
    pub mae_hard: f64,
    pub n: usize,
    pub threshold: f64,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Auc => self.auc,
            Metric::Mae => self.mae,
            Metric::Accuracy => self.accuracy,
            Metric::Specificity => self.specificity,
            Metric::Sensitivity => self.sensitivity,
            Metric::F1 => self.f1,
            Metric::MaeHard => self.mae_hard,
        }
    }
}

/// Area under the ROC curve from the Mann-Whitney rank statistic, with tied
/// scores sharing their average rank (ties count one half). NaN when either
/// class is absent.
pub fn auc_rank(probs: &[f64], labels: &[u8]) -> f64 {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return f64::NAN;
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));

    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && probs[order[end]] == probs[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum_pos += mid_rank * pos_in_group as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos * n_neg) as f64
}

pub fn compute_metrics(probs: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    if probs.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} probabilities but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Usage("no predictions to evaluate".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Usage(format!("probability {p} outside [0, 1]")));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Usage(format!("label {y} is not binary")));
    }
    let n = probs.len();
    let c = Confusion::from_predictions(probs, labels, threshold);
    let mae = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - y as f64).abs())
        .sum::<f64>()
        / n as f64;
    Ok(MetricsReport {
        auc: auc_rank(probs, labels),
        mae,
        accuracy: ratio(c.tp + c.tn, n),
        specificity: ratio(c.tn, c.tn + c.fp),
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        // 2PR/(P+R) rewritten over counts; 0 when there are positives but no hits.
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        mae_hard: ratio(c.fp + c.fn_, n),
        n,
        threshold,
        confusion: c,
    })
}
