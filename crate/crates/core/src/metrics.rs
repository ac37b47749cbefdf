//! Image-level ranking metrics.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Parallel scores and binary labels (1 = anomalous).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Metric("scores and labels differ in length"));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1"));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Metric("scores contain NaN"));
        }
        Ok(LabeledScores { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    fn counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }

    /// Indices sorted by score, ascending.
    fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[a].partial_cmp(&self.scores[b]).unwrap_or(Ordering::Equal));
        idx
    }

    /// Runs of equal scores over ascending order, as `(positives, total)`.
    fn tie_groups(&self) -> Vec<(usize, usize)> {
        let idx = self.order();
        let mut groups = Vec::new();
        let mut start = 0;
        while start < idx.len() {
            let mut end = start + 1;
            while end < idx.len() && self.scores[idx[end]] == self.scores[idx[start]] {
                end += 1;
            }
            let pos = idx[start..end].iter().filter(|&&i| self.labels[i] == 1).count();
            groups.push((pos, end - start));
            start = end;
        }
        groups
    }
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn auroc(data: &LabeledScores) -> Result<f64> {
    let (n_pos, n_neg) = data.counts();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUROC undefined: both classes are required"));
    }
    // Mann–Whitney U via tie-grouped counting.
    let mut negatives_below = 0usize;
    let mut twice_u = 0usize;
    for (pos, total) in data.tie_groups() {
        let neg = total - pos;
        twice_u += pos * (2 * negatives_below + neg);
        negatives_below += neg;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Step-integrated precision over the descending-score sweep, one step per
/// group of tied scores.
pub fn average_precision(data: &LabeledScores) -> Result<f64> {
    let (n_pos, _) = data.counts();
    if n_pos == 0 {
        return Err(Error::Metric("average precision undefined: no positives"));
    }
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    for (pos, total) in data.tie_groups().into_iter().rev() {
        tp += pos;
        seen += total;
        if pos > 0 {
            ap += (pos as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}
