//! Per-context performance and detection-confidence distributions.

use serde::{Deserialize, Serialize};

use super::experiment::{prepare_run, ExperimentConfig, PreparedRun};
use super::metrics::auc_pr;
use crate::detector::ModelCache;
use crate::error::{Error, Result};
use crate::model::{Dataset, ScoreMatrix, ANOMALY};
use crate::scalar::Scalar;

pub const CONFIDENCE_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            if v.is_nan() || v < lo || v > hi {
                continue;
            }
            let b = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

/// AUC-PR of every column taken as a detector by itself.
pub fn context_auc_pr<T: Scalar>(scores: &ScoreMatrix<T>, labels: &[u8]) -> Result<Vec<f64>> {
    (0..scores.n_contexts())
        .map(|i| {
            let col: Vec<T> = scores.column(i).to_vec();
            auc_pr(&col, labels)
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPerformance {
    pub bitmasks: Vec<u64>,
    /// Held-out AUC-PR per seed and context.
    pub per_seed: Vec<Vec<f64>>,
    /// Per-context mean over seeds.
    pub mean: Vec<f64>,
    pub histogram: Histogram,
}

impl ContextPerformance {
    pub fn from_prepared<T: Scalar>(runs: &[&PreparedRun<T>], bins: usize) -> Result<Self> {
        let first = runs.first().ok_or_else(|| Error::InvalidParameter("no runs".into()))?;
        let bitmasks = first.test_scores.context_ids().to_vec();
        let mut per_seed = Vec::with_capacity(runs.len());
        for run in runs {
            if run.test_scores.context_ids() != bitmasks.as_slice() {
                return Err(Error::InvalidParameter("runs scored different contexts".into()));
            }
            let labels = run.test.labels().ok_or(Error::MissingLabels)?;
            per_seed.push(context_auc_pr(&run.test_scores, labels)?);
        }
        let m = bitmasks.len();
        let mean: Vec<f64> = (0..m)
            .map(|i| per_seed.iter().map(|s| s[i]).sum::<f64>() / per_seed.len() as f64)
            .collect();
        let histogram = Histogram::new(&mean, bins, 0.0, 1.0);
        Ok(Self {
            bitmasks,
            per_seed,
            mean,
            histogram,
        })
    }

    pub fn median(&self) -> f64 {
        median(&self.mean)
    }

    /// Fraction of contexts whose mean AUC-PR is strictly below `value`.
    pub fn rank_fraction_below(&self, value: f64) -> f64 {
        self.mean.iter().filter(|&&v| v < value).count() as f64 / self.mean.len() as f64
    }

    pub fn mean_of(&self, bitmask: u64) -> Option<f64> {
        self.bitmasks.iter().position(|&b| b == bitmask).map(|i| self.mean[i])
    }
}

pub fn context_performance_distribution<T: Scalar>(
    data: &Dataset<T>,
    config: &ExperimentConfig,
    cache: Option<&ModelCache>,
) -> Result<ContextPerformance> {
    let runs = config
        .seeds
        .iter()
        .map(|&s| prepare_run(data, s, config, cache))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PreparedRun<T>> = runs.iter().collect();
    ContextPerformance::from_prepared(&refs, CONFIDENCE_BINS)
}

/// Per-class counts of samples binned by the fraction of contexts that
/// flag them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHistogram {
    pub anomalies: Histogram,
    pub normals: Histogram,
    pub detected_fraction: Vec<f64>,
}

impl ConfidenceHistogram {
    /// Anomalies flagged by fewer than half of the contexts.
    pub fn anomalies_below_margin(&self, labels: &[u8]) -> usize {
        self.detected_fraction
            .iter()
            .zip(labels)
            .filter(|&(&f, &l)| l == ANOMALY && f < 0.5)
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,lower,upper,count\n");
        for (name, h) in [("anomaly", &self.anomalies), ("normal", &self.normals)] {
            for (i, c) in h.counts.iter().enumerate() {
                out.push_str(&format!("{name},{},{},{c}\n", h.edges[i], h.edges[i + 1]));
            }
        }
        out
    }
}

pub fn confidence_histogram<T: Scalar>(scores: &ScoreMatrix<T>, labels: &[u8], th: T) -> Result<ConfidenceHistogram> {
    if labels.len() != scores.n_samples() {
        return Err(Error::LabelLengthMismatch {
            expected: scores.n_samples(),
            found: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l == ANOMALY).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let m = scores.n_contexts() as f64;
    let detected_fraction: Vec<f64> = (0..scores.n_samples())
        .map(|j| scores.row(j).iter().filter(|&&s| s >= th).count() as f64 / m)
        .collect();
    let split = |class: u8| -> Vec<f64> {
        detected_fraction
            .iter()
            .zip(labels)
            .filter_map(|(&f, &l)| (l == class).then_some(f))
            .collect()
    };
    Ok(ConfidenceHistogram {
        anomalies: Histogram::new(&split(ANOMALY), CONFIDENCE_BINS, 0.0, 1.0),
        normals: Histogram::new(&split(1 - ANOMALY), CONFIDENCE_BINS, 0.0, 1.0),
        detected_fraction,
    })
}
