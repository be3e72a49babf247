//! Candidate context enumeration and PCA reduction of wide datasets.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::model::{Context, Dataset};
use crate::scalar::Scalar;

/// Datasets with at least this many features are PCA-reduced before
/// enumeration.
pub const ENUMERATION_LIMIT: usize = 15;

/// Default number of retained principal components.
pub const DEFAULT_PCA_COMPONENTS: usize = 10;

/// An ordered list of distinct contexts over `d` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSet {
    contexts: Vec<Context>,
    d: usize,
}

impl ContextSet {
    /// Wraps an explicit list of contexts, checking validity and distinctness.
    pub fn from_contexts(contexts: Vec<Context>, d: usize) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for c in &contexts {
            c.validate(d)?;
            if !seen.insert(c.bitmask()) {
                return Err(Error::InvalidContext(format!("duplicate context {c}")));
            }
        }
        Ok(Self { contexts, d })
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize) -> Option<&Context> {
        self.contexts.get(i)
    }

    pub fn position(&self, context: &Context) -> Option<usize> {
        let mask = context.bitmask();
        self.contexts.iter().position(|c| c.bitmask() == mask)
    }

    pub fn bitmasks(&self) -> Vec<u64> {
        self.contexts.iter().map(Context::bitmask).collect()
    }
}

/// Every context over `d` features, ordered by ascending contextual bitmask.
pub fn enumerate_contexts(d: usize) -> Result<ContextSet> {
    if d < 2 {
        return Err(Error::DimensionTooSmall { d });
    }
    if d >= ENUMERATION_LIMIT {
        return Err(Error::DimensionTooLarge { d });
    }
    let full = (1u64 << d) - 1;
    let contexts = (1..full)
        .map(|mask| Context::from_bitmask(mask, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(ContextSet { contexts, d })
}

/// Per-column z-score parameters fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Zero-variance columns get unit scale, so they map to zero.
    pub fn fit(data: &Dataset<T>) -> Self {
        let x = data.features();
        let n = T::from_count(data.n());
        let mut mean = Vec::with_capacity(data.d());
        let mut scale = Vec::with_capacity(data.d());
        for col in x.axis_iter(Axis(1)) {
            let m = col.iter().copied().sum::<T>() / n;
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
            let s = var.sqrt();
            mean.push(m);
            scale.push(if s > T::epsilon() { s } else { T::one() });
        }
        Self { mean, scale }
    }

    pub fn transform(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        if data.d() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: data.d(),
            });
        }
        let mut x = data.features().to_owned();
        for mut row in x.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        data.with_features(x)
    }
}

/// Top principal directions of mean-centered data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection<T> {
    pub mean: Array1<T>,
    /// `k x d`, rows orthonormal, ordered by descending explained variance.
    pub components: Array2<T>,
    pub explained_variance: Vec<T>,
    pub explained_variance_ratio: Vec<T>,
}

impl<T: Scalar> PcaProjection<T> {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    /// Maps projected coordinates back into the original feature space.
    pub fn reconstruct(&self, projected: &Array2<T>) -> Array2<T> {
        let mut out = projected.dot(&self.components);
        for mut row in out.axis_iter_mut(Axis(0)) {
            row.zip_mut_with(&self.mean, |a, &m| *a = *a + m);
        }
        out
    }
}

/// Fits a `k`-component PCA on the training features.
pub fn fit_pca<T: Scalar>(train: &Dataset<T>, k: usize) -> Result<PcaProjection<T>> {
    let (n, d) = (train.n(), train.d());
    if k == 0 || k >= d || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must satisfy 0 < k < d = {d} and k < n = {n}"
        )));
    }
    let x = train.features();
    let mean = x.mean_axis(Axis(0)).ok_or(Error::EmptyDataset)?;
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / T::from_count(n - 1);
    let (values, vectors) = symmetric_eigen(&cov);

    let top = values.first().copied().unwrap_or_else(T::zero).max(T::zero());
    let tol = top * T::lit(1e-10).max(T::epsilon() * T::from_count(d));
    let rank = values.iter().filter(|&&v| v > tol).count();
    if rank < k {
        return Err(Error::RankDeficient { requested: k, rank });
    }
    let total: T = values.iter().map(|&v| v.max(T::zero())).sum();
    let explained_variance: Vec<T> = values[..k].to_vec();
    let explained_variance_ratio = explained_variance.iter().map(|&v| v / total).collect();
    let components = vectors.slice(ndarray::s![..k, ..]).to_owned();
    Ok(PcaProjection {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
    })
}

/// Like [`fit_pca`], but lowers `k` to the data rank with a warning.
pub fn fit_pca_adaptive<T: Scalar>(train: &Dataset<T>, k: usize) -> Result<PcaProjection<T>> {
    match fit_pca(train, k) {
        Err(Error::RankDeficient { rank, .. }) if rank >= 1 => {
            log::warn!("data rank {rank} below requested {k} components; using {rank}");
            fit_pca(train, rank)
        }
        other => other,
    }
}

/// Projects rows onto the fitted components using the training mean.
pub fn apply_pca<T: Scalar>(proj: &PcaProjection<T>, data: &Dataset<T>) -> Result<Dataset<T>> {
    if data.d() != proj.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: proj.input_dim(),
            found: data.d(),
        });
    }
    let centered = &data.features() - &proj.mean;
    let projected = centered.dot(&proj.components.t());
    let names = (0..proj.k()).map(|i| format!("pc{i}")).collect();
    data.with_features(projected)?.with_feature_names(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_dataset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn enumeration_counts() {
        let two = enumerate_contexts(2).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two.contexts()[0].contextual(), &[0]);
        assert_eq!(two.contexts()[0].behavioral(), &[1]);
        assert_eq!(two.contexts()[1].contextual(), &[1]);
        assert_eq!(enumerate_contexts(3).unwrap().len(), 6);
        assert_eq!(enumerate_contexts(10).unwrap().len(), 1022);
    }

    #[test]
    fn enumeration_exhaustive_up_to_ten() {
        for d in 2..=10 {
            let set = enumerate_contexts(d).unwrap();
            assert_eq!(set.len(), (1 << d) - 2);
            let masks = set.bitmasks();
            assert!(masks.windows(2).all(|w| w[0] < w[1]));
            for c in set.contexts() {
                c.validate(d).unwrap();
            }
        }
    }

    #[test]
    fn enumeration_bounds() {
        assert!(matches!(enumerate_contexts(1), Err(Error::DimensionTooSmall { d: 1 })));
        assert!(matches!(enumerate_contexts(15), Err(Error::DimensionTooLarge { d: 15 })));
        assert!(enumerate_contexts(14).is_ok());
    }

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
    }

    #[test]
    fn plane_in_five_dims_reconstructs_exactly() {
        let coeffs = gaussian(200, 2, 1);
        let basis = ndarray::array![[1.0, 2.0, 0.0, -1.0, 0.5], [0.0, 1.0, 1.0, 3.0, -2.0]];
        let x = coeffs.dot(&basis) + 4.0;
        let ds = validate_dataset(x.clone(), None).unwrap();
        let proj = fit_pca(&ds, 2).unwrap();
        let projected = apply_pca(&proj, &ds).unwrap();
        let back = proj.reconstruct(&projected.features().to_owned());
        let err = (&back - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-8, "reconstruction error {err}");
        assert!(matches!(fit_pca(&ds, 3), Err(Error::RankDeficient { rank: 2, .. })));
        assert_eq!(fit_pca_adaptive(&ds, 3).unwrap().k(), 2);
    }

    #[test]
    fn components_orthonormal_and_projection_centered() {
        let ds = validate_dataset(gaussian(300, 8, 2) * 3.0 + 1.0, None).unwrap();
        let proj = fit_pca(&ds, 5).unwrap();
        let gram = proj.components.dot(&proj.components.t());
        for i in 0..5 {
            for j in 0..5 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - e).abs() < 1e-8);
            }
        }
        let out = apply_pca(&proj, &ds).unwrap();
        for m in out.features().mean_axis(Axis(0)).unwrap() {
            assert!(m.abs() < 1e-8);
        }
        assert!(proj.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn isotropic_variance_ratios_match_covariance_eigen_oracle() {
        let x = gaussian(5000, 10, 3);
        let ds = validate_dataset(x.clone(), None).unwrap();
        // k must be < d, so fit 9 components and compare against the
        // independent full eigendecomposition for all ten.
        let proj = fit_pca(&ds, 9).unwrap();
        let mean = x.mean_axis(Axis(0)).unwrap();
        let c = &x - &mean;
        let cov = c.t().dot(&c) / 4999.0;
        let na = nalgebra::DMatrix::from_fn(10, 10, |i, j| cov[[i, j]]);
        let mut oracle: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = oracle.iter().sum();
        for (i, r) in proj.explained_variance_ratio.iter().enumerate() {
            assert!((r - oracle[i] / total).abs() < 1e-9);
            assert!((r - 0.1).abs() < 0.05, "ratio {r}");
        }
    }

    #[test]
    fn zero_variance_column_has_no_loading() {
        let mut x = gaussian(100, 4, 4);
        x.column_mut(2).fill(7.0);
        let ds = validate_dataset(x, None).unwrap();
        let proj = fit_pca(&ds, 2).unwrap();
        for row in proj.components.rows() {
            assert!(row[2].abs() < 1e-10);
        }
    }

    #[test]
    fn test_rows_use_training_mean() {
        let train = validate_dataset(gaussian(100, 5, 5), None).unwrap();
        let test = validate_dataset(gaussian(40, 5, 6) + 10.0, None).unwrap();
        let proj = fit_pca(&train, 2).unwrap();
        let out = apply_pca(&proj, &test).unwrap();
        let expected = (&test.features() - &proj.mean).dot(&proj.components.t());
        assert_eq!(out.features(), expected.view());
        let wrong = validate_dataset(gaussian(4, 3, 7), None).unwrap();
        assert!(matches!(apply_pca(&proj, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn wide_input_reduces_to_enumerable_dimension() {
        let ds = validate_dataset(gaussian(452, 274, 8), None).unwrap();
        let proj = fit_pca(&ds, DEFAULT_PCA_COMPONENTS).unwrap();
        let out = apply_pca(&proj, &ds).unwrap();
        assert_eq!(out.d(), 10);
        assert_eq!(enumerate_contexts(out.d()).unwrap().len(), 1022);
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let x = gaussian(200, 3, 9) * 5.0 + 2.0;
        let ds = validate_dataset(x, None).unwrap();
        let z = Standardizer::fit(&ds).transform(&ds).unwrap();
        for col in z.features().axis_iter(Axis(1)) {
            let m = col.mean().unwrap();
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 200.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
    }
}
