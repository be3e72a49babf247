//! Isotropic blobs with uniformly scattered global outliers.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_dataset, Dataset};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalSpec {
    pub n: usize,
    pub d: usize,
    pub n_clusters: usize,
    pub anomaly_fraction: f64,
    /// Cluster centers are drawn from `[-center_range, center_range]^d`.
    #[serde(default = "default_center_range")]
    pub center_range: f64,
    /// Outliers are drawn from `[-outlier_range, outlier_range]^d`.
    #[serde(default = "default_outlier_range")]
    pub outlier_range: f64,
    /// Each cluster's standard deviation is drawn from this interval.
    #[serde(default = "default_std")]
    pub cluster_std: (f64, f64),
    pub seed: u64,
}

fn default_center_range() -> f64 {
    10.0
}

fn default_outlier_range() -> f64 {
    15.0
}

fn default_std() -> (f64, f64) {
    (0.5, 1.5)
}

impl GlobalSpec {
    pub fn new(n: usize, d: usize, n_clusters: usize, anomaly_fraction: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            n_clusters,
            anomaly_fraction,
            center_range: default_center_range(),
            outlier_range: default_outlier_range(),
            cluster_std: default_std(),
            seed,
        }
    }

    /// 5,100 points in 10 dimensions, 5 clusters, 2% outliers.
    pub fn synthetic4(seed: u64) -> Self {
        Self::new(5_100, 10, 5, 0.02, seed)
    }

    pub fn n_outliers(&self) -> usize {
        (self.anomaly_fraction * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleSpec(m.into()));
        if self.n_clusters == 0 {
            return bad("n_clusters must be at least 1");
        }
        if self.d == 0 {
            return bad("d must be positive");
        }
        if !(0.0..1.0).contains(&self.anomaly_fraction) {
            return bad("anomaly_fraction must lie in [0, 1)");
        }
        let (lo, hi) = self.cluster_std;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return bad("cluster_std must be an ordered non-negative interval");
        }
        if !(self.center_range > 0.0 && self.outlier_range > 0.0) {
            return bad("ranges must be positive");
        }
        if self.n < self.n_outliers() + self.n_clusters {
            return bad("every cluster needs at least one point");
        }
        Ok(())
    }
}

/// Splits `total` into `k` parts proportional to `weights`, largest
/// remainder first.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut parts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut left = total - parts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    parts
}

pub fn gen_global<T: Scalar>(n: usize, d: usize, n_clusters: usize, anomaly_fraction: f64, seed: u64) -> Result<Dataset<T>> {
    gen_global_with(&GlobalSpec::new(n, d, n_clusters, anomaly_fraction, seed))
}

pub fn gen_global_with<T: Scalar>(spec: &GlobalSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_out = spec.n_outliers();
    let sizes_w: Vec<f64> = (0..spec.n_clusters).map(|_| rng.gen_range(1.0..2.0)).collect();
    let mut sizes = apportion(spec.n - n_out - spec.n_clusters, &sizes_w);
    for s in &mut sizes {
        *s += 1;
    }
    let (lo, hi) = spec.cluster_std;
    let mut rows: Vec<(Vec<f64>, u8)> = Vec::with_capacity(spec.n);
    for &size in &sizes {
        let center: Vec<f64> = (0..spec.d).map(|_| rng.gen_range(-spec.center_range..spec.center_range)).collect();
        let std = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        for _ in 0..size {
            let x = center
                .iter()
                .map(|&c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + std * z
                })
                .collect();
            rows.push((x, 0));
        }
    }
    for _ in 0..n_out {
        let x = (0..spec.d).map(|_| rng.gen_range(-spec.outlier_range..spec.outlier_range)).collect();
        rows.push((x, 1));
    }
    rows.shuffle(&mut rng);
    let mut features = Array2::<T>::zeros((spec.n, spec.d));
    let mut labels = Vec::with_capacity(spec.n);
    for (r, (x, y)) in rows.into_iter().enumerate() {
        for (f, v) in x.into_iter().enumerate() {
            features[[r, f]] = T::lit(v);
        }
        labels.push(y);
    }
    validate_dataset(features, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let data = gen_global_with::<f64>(&GlobalSpec::synthetic4(0)).unwrap();
        assert_eq!(data.n(), 5_100);
        assert_eq!(data.d(), 10);
        assert_eq!(data.anomaly_count(), Some(102));
    }

    #[test]
    fn no_outliers() {
        let data = gen_global::<f64>(500, 3, 2, 0.0, 1).unwrap();
        assert_eq!(data.anomaly_count(), Some(0));
    }

    #[test]
    fn degenerate_blobs_isolate_outliers() {
        let mut spec = GlobalSpec::new(300, 4, 3, 0.05, 2);
        spec.cluster_std = (0.0, 0.0);
        let data = gen_global_with::<f64>(&spec).unwrap();
        let labels = data.labels().unwrap();
        let x = data.features();
        let dist = |a: usize, b: usize| -> f64 {
            (0..4).map(|k| (x[[a, k]] - x[[b, k]]).powi(2)).sum::<f64>().sqrt()
        };
        let n = data.n();
        let nearest = |a: usize| (0..n).filter(|&b| b != a).map(|b| dist(a, b)).fold(f64::INFINITY, f64::min);
        let intra = (0..n).filter(|&a| labels[a] == 0).map(nearest).fold(0.0, f64::max);
        assert_eq!(intra, 0.0);
        for a in (0..n).filter(|&a| labels[a] == 1) {
            assert!(nearest(a) > intra);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(gen_global::<f64>(100, 3, 0, 0.1, 0).is_err());
        assert!(gen_global::<f64>(100, 3, 2, 1.0, 0).is_err());
        assert!(gen_global::<f64>(3, 3, 5, 0.0, 0).is_err());
    }
}
