//! Shared domain types: datasets, contexts, labeled pools and score matrices.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Label value of an anomalous sample.
pub const ANOMALY: u8 = 1;
/// Label value of a normal sample.
pub const NORMAL: u8 = 0;

/// Largest dimensionality a [`Context`] bitmask can address.
pub const MAX_CONTEXT_DIM: usize = 63;

/// A bipartition of the feature indices into contextual and behavioral
/// attributes. Both sides are non-empty and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Context {
    contextual: Vec<usize>,
    behavioral: Vec<usize>,
}

impl Context {
    /// Builds the context whose contextual set is `contextual`; every other
    /// feature in `0..d` is behavioral.
    pub fn new(contextual: impl IntoIterator<Item = usize>, d: usize) -> Result<Self> {
        let set: BTreeSet<usize> = contextual.into_iter().collect();
        if let Some(&bad) = set.iter().find(|&&f| f >= d) {
            return Err(Error::InvalidContext(format!(
                "feature {bad} out of range for d = {d}"
            )));
        }
        if set.is_empty() {
            return Err(Error::InvalidContext("contextual set is empty".into()));
        }
        if set.len() == d {
            return Err(Error::InvalidContext("behavioral set is empty".into()));
        }
        let behavioral = (0..d).filter(|f| !set.contains(f)).collect();
        Ok(Self {
            contextual: set.into_iter().collect(),
            behavioral,
        })
    }

    /// Context whose contextual features are the set bits of `mask`.
    pub fn from_bitmask(mask: u64, d: usize) -> Result<Self> {
        if d > MAX_CONTEXT_DIM {
            return Err(Error::InvalidContext(format!(
                "d = {d} exceeds bitmask capacity"
            )));
        }
        if mask >> d != 0 {
            return Err(Error::InvalidContext(format!(
                "mask {mask:#b} has bits beyond d = {d}"
            )));
        }
        Self::new((0..d).filter(|f| mask & (1 << f) != 0), d)
    }

    pub fn contextual(&self) -> &[usize] {
        &self.contextual
    }

    pub fn behavioral(&self) -> &[usize] {
        &self.behavioral
    }

    pub fn dim(&self) -> usize {
        self.contextual.len() + self.behavioral.len()
    }

    /// Bitmask of the contextual features.
    pub fn bitmask(&self) -> u64 {
        self.contextual.iter().fold(0u64, |m, &f| m | (1 << f))
    }

    /// Checks the partition invariants against a dimensionality.
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.dim(),
            });
        }
        let rebuilt = Self::new(self.contextual.iter().copied(), d)?;
        if &rebuilt != self {
            return Err(Error::InvalidContext(
                "contextual and behavioral sets do not partition the features".into(),
            ));
        }
        Ok(())
    }
}

impl std::fmt::Display for Context {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "C{:?}/B{:?}", self.contextual, self.behavioral)
    }
}

/// An `n x d` matrix of finite features with optional binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    features: Array2<T>,
    labels: Option<Vec<u8>>,
    feature_names: Vec<String>,
    true_context: Option<Context>,
    anomaly_rate: Option<f64>,
}

/// Validates a raw matrix and optional labels into a [`Dataset`].
pub fn validate_dataset<T: Scalar>(
    features: Array2<T>,
    labels: Option<Vec<u8>>,
) -> Result<Dataset<T>> {
    let (n, d) = features.dim();
    if n == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    for ((row, col), v) in features.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { row, col });
        }
    }
    let anomaly_rate = match &labels {
        Some(l) => {
            if l.len() != n {
                return Err(Error::LabelLengthMismatch {
                    expected: n,
                    found: l.len(),
                });
            }
            if let Some((row, v)) = l.iter().enumerate().find(|(_, &v)| v > 1) {
                return Err(Error::LabelDomain {
                    row,
                    value: v.to_string(),
                });
            }
            Some(l.iter().filter(|&&v| v == ANOMALY).count() as f64 / n as f64)
        }
        None => None,
    };
    Ok(Dataset {
        features,
        labels,
        feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        true_context: None,
        anomaly_rate,
    })
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from row vectors, rejecting ragged input.
    pub fn from_rows(rows: &[Vec<T>], labels: Option<Vec<u8>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Ragged {
                    row,
                    expected: d,
                    found: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        let features =
            Array2::from_shape_vec((rows.len(), d), flat).map_err(|_| Error::EmptyDataset)?;
        validate_dataset(features, labels)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_true_context(mut self, context: Context) -> Result<Self> {
        context.validate(self.d())?;
        self.true_context = Some(context);
        Ok(self)
    }

    /// Replaces the feature matrix, keeping labels. Names reset when the
    /// width changes and the true context is dropped.
    pub fn with_features(&self, features: Array2<T>) -> Result<Self> {
        let same_width = features.ncols() == self.d();
        let mut out = validate_dataset(features, self.labels.clone())?;
        if same_width {
            out.feature_names = self.feature_names.clone();
            out.true_context = self.true_context.clone();
        }
        Ok(out)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self.anomaly_rate = None;
        self
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, T> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.features.row(i)
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn true_context(&self) -> Option<&Context> {
        self.true_context.as_ref()
    }

    /// Fraction of anomalies. Metadata only; the detector never reads it.
    pub fn anomaly_rate(&self) -> Option<f64> {
        self.anomaly_rate
    }

    pub fn anomaly_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().filter(|&&v| v == ANOMALY).count())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let features = self.features.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect::<Vec<_>>());
        let anomaly_rate = labels.as_ref().map(|l: &Vec<u8>| {
            l.iter().filter(|&&v| v == ANOMALY).count() as f64 / l.len().max(1) as f64
        });
        Self {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            true_context: self.true_context.clone(),
            anomaly_rate,
        }
    }

    /// Row-major copy of the given columns for the given rows.
    pub fn gather(&self, rows: &[usize], cols: &[usize]) -> Vec<T> {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            let row = self.features.row(r);
            out.extend(cols.iter().map(|&c| row[c]));
        }
        out
    }

    /// Row-major copy of the given columns for every row.
    pub fn gather_columns(&self, cols: &[usize]) -> Vec<T> {
        let all: Vec<usize> = (0..self.n()).collect();
        self.gather(&all, cols)
    }
}

/// Train and test row indices of a split, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified index split over binary labels.
///
/// Each class gets `floor(fraction * n_class)` training rows; the remaining
/// rows up to `round(fraction * n)` go to the classes with the largest
/// fractional parts (lower class first on ties).
pub fn stratified_split_indices(
    labels: &[u8],
    train_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[usize::from(y.min(1))].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::DegenerateClass { class: class as u8 });
        }
    }

    let n = labels.len();
    let target = (train_fraction * n as f64 + 0.5).floor() as usize;
    let exact: Vec<f64> = by_class
        .iter()
        .map(|m| train_fraction * m.len() as f64)
        .collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = vec![0, 1];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(counts.iter().sum());
    for &c in order.iter().cycle().take(4) {
        if remaining == 0 {
            break;
        }
        if counts[c] < by_class[c].len() {
            counts[c] += 1;
            remaining -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    for (members, &count) in by_class.iter_mut().zip(&counts) {
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..count]);
        test.extend_from_slice(&members[count..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Splits a labeled dataset into stratified train and test parts.
pub fn stratified_split<T: Scalar>(
    data: &Dataset<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let split = stratified_split_indices(labels, train_fraction, seed)?;
    Ok((data.subset(&split.train), data.subset(&split.test)))
}

/// One oracle answer in the labeled pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry<T> {
    pub index: usize,
    pub label: u8,
    pub weight: T,
}

/// Labeled samples with their sample weights, capped by the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPool<T> {
    entries: Vec<PoolEntry<T>>,
    budget: usize,
}

impl<T: Scalar> LabeledPool<T> {
    pub fn new(budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidParameter("budget must be positive".into()));
        }
        Ok(Self {
            entries: Vec::with_capacity(budget),
            budget,
        })
    }

    pub fn push(&mut self, index: usize, label: u8, weight: T) -> Result<()> {
        if self.entries.len() >= self.budget {
            return Err(Error::BudgetExceedsPool {
                budget: self.budget,
                pool: self.entries.len(),
            });
        }
        if label > 1 {
            return Err(Error::LabelDomain {
                row: index,
                value: label.to_string(),
            });
        }
        if !(weight.is_finite() && weight >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "sample weight {weight} must be finite and non-negative"
            )));
        }
        if self.contains(index) {
            return Err(Error::AlreadyLabeled { index });
        }
        self.entries.push(PoolEntry {
            index,
            label,
            weight,
        });
        Ok(())
    }

    pub fn contains(&self, index: usize) -> bool {
        self.entries.iter().any(|e| e.index == index)
    }

    pub fn entries(&self) -> &[PoolEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.budget
    }

    pub fn total_weight(&self) -> T {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

/// `n x m` unified anomaly scores, one column per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix<T> {
    scores: Array2<T>,
    context_ids: Vec<u64>,
}

impl<T: Scalar> ScoreMatrix<T> {
    /// `context_ids` are contextual-set bitmasks, one per column.
    pub fn new(scores: Array2<T>, context_ids: Vec<u64>) -> Result<Self> {
        if scores.ncols() != context_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: context_ids.len(),
                found: scores.ncols(),
            });
        }
        if let Some(((row, col), _)) = scores
            .indexed_iter()
            .find(|(_, &v)| !(v >= T::zero() && v <= T::one()))
        {
            return Err(Error::InvalidParameter(format!(
                "score at ({row}, {col}) outside [0, 1]"
            )));
        }
        Ok(Self {
            scores,
            context_ids,
        })
    }

    pub fn scores(&self) -> ArrayView2<'_, T> {
        self.scores.view()
    }

    pub fn column(&self, i: usize) -> ArrayView1<'_, T> {
        self.scores.column(i)
    }

    pub fn row(&self, j: usize) -> ArrayView1<'_, T> {
        self.scores.row(j)
    }

    pub fn n_samples(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_contexts(&self) -> usize {
        self.scores.ncols()
    }

    pub fn context_ids(&self) -> &[u64] {
        &self.context_ids
    }

    /// Column of the context with the given bitmask, if scored.
    pub fn position_of(&self, mask: u64) -> Option<usize> {
        self.context_ids.iter().position(|&m| m == mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn validate_reports_counts() {
        let ds = validate_dataset(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], Some(vec![0, 0, 1]))
            .unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert!((ds.anomaly_rate().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_nan_with_position() {
        let err = validate_dataset(array![[1.0, 2.0], [f64::NAN, 4.0]], None).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { row: 1, col: 0 }));
    }

    #[test]
    fn validate_rejects_label_length() {
        let err = validate_dataset(array![[1.0], [2.0], [3.0]], Some(vec![0, 1, 0, 1])).unwrap_err();
        assert!(matches!(err, Error::LabelLengthMismatch { expected: 3, found: 4 }));
    }

    #[test]
    fn validate_rejects_empty_and_ragged() {
        let empty: Array2<f64> = Array2::zeros((0, 3));
        assert!(matches!(validate_dataset(empty, None), Err(Error::EmptyDataset)));
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(Dataset::from_rows(&rows, None), Err(Error::Ragged { row: 1, .. })));
    }

    #[test]
    fn context_rejects_empty_sides() {
        for d in 2..=12 {
            assert!(Context::new(std::iter::empty(), d).is_err());
            assert!(Context::new(0..d, d).is_err());
            assert!(Context::from_bitmask(0, d).is_err());
            assert!(Context::from_bitmask((1 << d) - 1, d).is_err());
        }
    }

    #[test]
    fn context_bitmask_round_trip() {
        let c = Context::new([0, 2], 4).unwrap();
        assert_eq!(c.behavioral(), &[1, 3]);
        assert_eq!(c.bitmask(), 0b0101);
        assert_eq!(Context::from_bitmask(0b0101, 4).unwrap(), c);
    }

    #[test]
    fn split_hundred_keeps_proportions() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 10 == 0)).collect();
        let s = stratified_split_indices(&labels, 0.7, 3).unwrap();
        assert_eq!(s.train.len(), 70);
        assert_eq!(s.train.iter().filter(|&&i| labels[i] == 1).count(), 7);
        assert_eq!(s, stratified_split_indices(&labels, 0.7, 3).unwrap());
    }

    #[test]
    fn split_single_anomaly_goes_to_train() {
        // floor: 6 normals + 0 anomalies; target 7; the anomaly's fractional
        // part 0.7 beats the normals' 0.3, so it takes the remaining slot.
        let mut labels = vec![0u8; 10];
        labels[4] = 1;
        let s = stratified_split_indices(&labels, 0.7, 11).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (7, 3));
        assert!(s.train.contains(&4));
        assert!(!s.test.contains(&4));
    }

    #[test]
    fn split_needs_labels_and_both_classes() {
        let ds = validate_dataset(array![[1.0], [2.0]], None).unwrap();
        assert!(matches!(stratified_split(&ds, 0.7, 0), Err(Error::MissingLabels)));
        assert!(matches!(
            stratified_split_indices(&[0, 0, 0], 0.7, 0),
            Err(Error::DegenerateClass { class: 1 })
        ));
    }

    #[test]
    fn score_matrix_rejects_out_of_range() {
        assert!(ScoreMatrix::new(array![[0.5, 1.2]], vec![1, 2]).is_err());
        assert!(ScoreMatrix::new(array![[0.5, -0.1]], vec![1, 2]).is_err());
        assert!(ScoreMatrix::new(array![[0.5, 0.7]], vec![1]).is_err());
        assert!(ScoreMatrix::new(array![[0.0, 1.0]], vec![1, 2]).is_ok());
    }

    #[test]
    fn pool_enforces_budget_and_uniqueness() {
        let mut pool = LabeledPool::<f64>::new(2).unwrap();
        pool.push(3, 1, 0.5).unwrap();
        assert!(matches!(pool.push(3, 0, 0.0), Err(Error::AlreadyLabeled { index: 3 })));
        assert!(pool.push(4, 0, f64::NAN).is_err());
        pool.push(4, 0, 0.0).unwrap();
        assert!(pool.push(5, 1, 1.0).is_err());
        assert_eq!(pool.total_weight(), 0.5);
    }

    proptest! {
        #[test]
        fn split_is_disjoint_and_exhaustive(
            labels in proptest::collection::vec(0u8..=1, 2..300),
            fraction in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let s = stratified_split_indices(&labels, fraction, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for class in 0..=1u8 {
                let total = labels.iter().filter(|&&y| y == class).count() as f64;
                let in_train = s.train.iter().filter(|&&i| labels[i] == class).count() as f64;
                prop_assert!((in_train - fraction * total).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
