//! Detection error, context importance, margin rate and sample weights.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::model::{LabeledPool, ScoreMatrix, ANOMALY};
use crate::scalar::Scalar;

/// Errors are clamped into `[EPSILON_MIN, 1 - EPSILON_MIN]` so importances
/// stay finite.
pub const EPSILON_MIN: f64 = 1e-6;

/// Default anomaly cutoff on unified scores.
pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// Binary `n x m` predictions: 1 where the unified score reaches `th`.
pub fn predictions<T: Scalar>(scores: &ScoreMatrix<T>, th: T) -> Array2<u8> {
    scores.scores().mapv(|s| u8::from(s >= th))
}

/// Weighted fraction of labeled samples a context gets wrong.
///
/// `context_preds` holds the context's prediction for every sample. A pool
/// whose weights sum to zero yields 0.5.
pub fn detection_error<T: Scalar>(context_preds: ArrayView1<'_, u8>, pool: &LabeledPool<T>) -> Result<T> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut wrong = T::zero();
    let mut total = T::zero();
    for e in pool.entries() {
        total = total + e.weight;
        if context_preds[e.index] != e.label {
            wrong = wrong + e.weight;
        }
    }
    if !(total > T::zero()) {
        return Ok(T::lit(0.5));
    }
    Ok(clamp_error(wrong / total))
}

pub(crate) fn clamp_error<T: Scalar>(eps: T) -> T {
    let lo = T::lit(EPSILON_MIN);
    eps.max(lo).min(T::one() - lo)
}

/// `0.5 * ln((1 - eps) / eps)`; negative when the context is worse than chance.
pub fn importance<T: Scalar>(eps: T) -> T {
    T::lit(0.5) * ((T::one() - eps) / eps).ln()
}

/// Strategy weights from importances: negatives floored at zero, uniform if
/// nothing positive remains. Normalized to sum to one.
pub fn effective_weights<T: Scalar>(importances: &[T]) -> Vec<T> {
    let floored: Vec<T> = importances.iter().map(|&i| i.max(T::zero())).collect();
    let total: T = floored.iter().copied().sum();
    if total > T::zero() {
        floored.into_iter().map(|w| w / total).collect()
    } else {
        let m = T::from_count(importances.len().max(1));
        vec![T::one() / m; importances.len()]
    }
}

/// Weighted fraction of contexts flagging a sample.
pub fn vote_fraction<T: Scalar>(sample_preds: &[u8], weights: &[T]) -> T {
    sample_preds
        .iter()
        .zip(weights)
        .filter(|(&p, _)| p == ANOMALY)
        .map(|(_, &w)| w)
        .sum::<T>()
        .min(T::one())
}

/// `1 - |2v - 1|` for vote fraction `v`; 1 on an even split, 0 on consensus.
pub fn margin_from_vote<T: Scalar>(vote: T) -> T {
    let m = T::one() - (T::lit(2.0) * vote - T::one()).abs();
    m.max(T::zero()).min(T::one())
}

pub fn margin_rate<T: Scalar>(sample_preds: &[u8], importances: &[T]) -> T {
    margin_from_vote(vote_fraction(sample_preds, &effective_weights(importances)))
}

/// Low-confidence-anomaly weighting: anomalies carry their margin, normals
/// nothing.
pub fn sample_weight<T: Scalar>(label: u8, margin: T) -> T {
    if label == ANOMALY {
        margin
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn pool(entries: &[(usize, u8, f64)]) -> LabeledPool<f64> {
        let mut p = LabeledPool::new(entries.len().max(1)).unwrap();
        for &(i, y, w) in entries {
            p.push(i, y, w).unwrap();
        }
        p
    }

    #[test]
    fn threshold_is_inclusive() {
        let s = ScoreMatrix::new(array![[0.9, 0.899], [0.0, 0.0]], vec![1, 2]).unwrap();
        let p = predictions(&s, 0.9);
        assert_eq!(p, array![[1u8, 0], [0, 0]]);
    }

    #[test]
    fn detection_error_arithmetic() {
        let preds = Array1::from(vec![1u8, 1, 0]);
        let half = pool(&[(0, 1, 0.5), (1, 0, 0.5)]);
        assert_eq!(detection_error(preds.view(), &half).unwrap(), 0.5);
        let three = pool(&[(0, 1, 0.5), (1, 0, 0.3), (2, 0, 0.2)]);
        assert!((detection_error(preds.view(), &three).unwrap() - 0.3).abs() < 1e-15);
        let zero = pool(&[(0, 0, 0.0), (2, 0, 0.0)]);
        assert_eq!(detection_error(preds.view(), &zero).unwrap(), 0.5);
        let empty = LabeledPool::<f64>::new(3).unwrap();
        assert!(matches!(detection_error(preds.view(), &empty), Err(Error::EmptyPool)));
    }

    #[test]
    fn detection_error_clamps() {
        let preds = Array1::from(vec![1u8]);
        let right = pool(&[(0, 1, 1.0)]);
        assert_eq!(detection_error(preds.view(), &right).unwrap(), EPSILON_MIN);
        let wrong = pool(&[(0, 0, 1.0)]);
        assert_eq!(detection_error(preds.view(), &wrong).unwrap(), 1.0 - EPSILON_MIN);
    }

    #[test]
    fn importance_table() {
        assert_eq!(importance(0.5f64), 0.0);
        assert!((importance(0.25f64) - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!((importance(0.25f64) - 0.549_306_144_334_054_8).abs() < 1e-15);
        assert!((importance(0.75f64) + 0.5 * 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn margin_table() {
        let eq = [1.0f64; 4];
        assert_eq!(margin_rate(&[1, 1, 0, 0], &eq), 1.0);
        assert_eq!(margin_rate(&[1, 0, 0, 0], &eq), 0.5);
        assert_eq!(margin_rate(&[1, 1, 1, 1], &eq), 0.0);
        assert_eq!(margin_rate(&[0, 0, 0, 0], &eq), 0.0);
        // all-negative importances fall back to uniform weights
        assert_eq!(margin_rate(&[1, 0, 0, 0], &[-1.0f64; 4]), 0.5);
    }

    #[test]
    fn sample_weight_rule() {
        assert_eq!(sample_weight(0, 0.9f64), 0.0);
        assert_eq!(sample_weight(1, 0.5f64), 0.5);
        assert_eq!(sample_weight(1, 0.0f64), 0.0);
    }

    proptest! {
        #[test]
        fn importance_antisymmetric_and_decreasing(a in 1e-6f64..0.999_999, b in 1e-6f64..0.999_999) {
            prop_assert!((importance(a) + importance(1.0 - a)).abs() < 1e-9);
            if a < b {
                prop_assert!(importance(a) > importance(b));
            }
        }

        #[test]
        fn margin_bounds(preds in proptest::collection::vec(0u8..=1, 1..20), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let imps: Vec<f64> = preds.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
            let m = margin_rate(&preds, &imps);
            prop_assert!((0.0..=1.0).contains(&m));
            let v = vote_fraction(&preds, &effective_weights(&imps));
            if v == 0.0 || v == 1.0 {
                prop_assert_eq!(m, 0.0);
            }
        }
    }
}
