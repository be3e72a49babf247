//! Ranking metrics.

use crate::error::{Error, Result};
use crate::model::ANOMALY;
use crate::scalar::Scalar;

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == ANOMALY).count();
    (pos, labels.len() - pos)
}

fn check<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LabelLengthMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if let Some(col) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFiniteValue { row: col, col: 0 });
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

fn descending<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN"));
    order
}

/// Average precision: sum over distinct thresholds of recall gain times
/// precision, with tied scores forming one threshold.
pub fn auc_pr<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    let order = descending(scores);
    let mut ap = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let start_tp = tp;
        while i < order.len() && scores[order[i]] == s {
            tp += usize::from(labels[order[i]] == ANOMALY);
            seen += 1;
            i += 1;
        }
        if tp > start_tp {
            ap += (tp - start_tp) as f64 / pos as f64 * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// Probability a random anomaly outscores a random normal, ties counting
/// half, via midranks.
pub fn auc_roc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    let mut order = descending(scores);
    order.reverse();
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        while j < order.len() && scores[order[j]] == s {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let hits = order[i..j].iter().filter(|&&k| labels[k] == ANOMALY).count();
        rank_sum += midrank * hits as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}
