//! ACC, ROC AUC and average precision.

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub acc: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub aupr: Option<f64>,
    pub n: usize,
    pub positives: usize,
}

fn check(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::contract("scores and labels differ in length"));
    }
    if scores.len() < 2 {
        return Err(Error::contract("metrics need at least two samples"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::contract("non-finite score"));
    }
    Ok(())
}

pub fn accuracy(scores: &[f64], labels: &[bool]) -> f64 {
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, y)| (**s >= THRESHOLD) == **y)
        .count();
    hits as f64 / scores.len() as f64
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(alloc::vec![i]),
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    // Walk groups from the highest score: each positive beats every
    // negative below its group and ties with those inside it.
    let mut negatives_above = 0usize;
    let mut wins = 0.0;
    for g in tie_groups(scores) {
        let p = g.iter().filter(|&&i| labels[i]).count();
        let n = g.len() - p;
        wins += p as f64 * (neg - negatives_above - n) as f64 + 0.5 * (p * n) as f64;
        negatives_above += n;
    }
    Some(wins / (pos as f64 * neg as f64))
}

/// Average precision: sum over distinct thresholds of
/// `(recall_k - recall_{k-1}) * precision_k`.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return None;
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for g in tie_groups(scores) {
        let p = g.iter().filter(|&&i| labels[i]).count();
        tp += p;
        seen += g.len();
        ap += (p as f64 / pos as f64) * (tp as f64 / seen as f64);
    }
    Some(ap)
}

pub fn compute_metrics(scores: &[f64], labels: &[bool]) -> Result<Metrics> {
    check(scores, labels)?;
    Ok(Metrics {
        acc: accuracy(scores, labels),
        auc: roc_auc(scores, labels),
        aupr: average_precision(scores, labels),
        n: scores.len(),
        positives: labels.iter().filter(|&&y| y).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let m = compute_metrics(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!((m.acc, m.auc, m.aupr), (1.0, Some(1.0), Some(1.0)));
    }

    #[test]
    fn all_tied_scores() {
        let labels = [true, false, true, false];
        assert_eq!(roc_auc(&[0.3; 4], &labels), Some(0.5));
        assert_eq!(average_precision(&[0.3; 4], &labels), Some(0.5));
    }

    #[test]
    fn single_class_is_undefined() {
        let m = compute_metrics(&[0.9, 0.2, 0.7], &[true, true, true]).unwrap();
        assert_eq!((m.auc, m.aupr), (None, None));
        assert!((m.acc - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hand_worked_example() {
        // ranked: 0.9(+) 0.8(-) 0.7(+) 0.6(-)
        let s = [0.9, 0.8, 0.7, 0.6];
        let y = [true, false, true, false];
        assert_eq!(roc_auc(&s, &y), Some(0.75));
        let ap = average_precision(&s, &y).unwrap();
        assert!((ap - (0.5 * 1.0 + 0.5 * (2.0 / 3.0))).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compute_metrics(&[0.5], &[true]).is_err());
        assert!(compute_metrics(&[0.5, 0.2], &[true]).is_err());
        assert!(compute_metrics(&[f64::NAN, 0.2], &[true, false]).is_err());
    }
}
