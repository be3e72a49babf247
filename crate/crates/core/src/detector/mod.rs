//! Per-context base detector.
//!
//! For one context the detector clusters the training rows on their
//! (z-scored) contextual attributes, fits one isolation forest per cluster on
//! the behavioral attributes, and unifies the raw forest scores of the whole
//! training set with a single Gaussian scaling.

mod cache;
mod iforest;
mod unify;
mod xmeans;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{dataset_fingerprint, CachedColumns, ModelCache};
pub use iforest::{average_path_length, IsolationForestModel, IsolationForestParams, IsolationTree};
pub use unify::{unify, UnificationParams};
pub use xmeans::XMeansParams;

use crate::context::ContextSet;
use crate::error::{Error, Result};
use crate::model::{Context, Dataset, ScoreMatrix};
use crate::scalar::Scalar;
use xmeans::{merge_small_groups, nearest, xmeans, Points};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub xmeans: XMeansParams,
    pub forest: IsolationForestParams,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            xmeans: XMeansParams::default(),
            forest: IsolationForestParams::default(),
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_clusters(mut self, max_clusters: usize) -> Self {
        self.xmeans.max_clusters = max_clusters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.xmeans.max_clusters == 0 || self.xmeans.fallback_max_clusters == 0 {
            return Err(Error::InvalidParameter("max_clusters must be positive".into()));
        }
        if self.forest.n_trees == 0 || self.forest.max_samples == 0 {
            return Err(Error::InvalidParameter(
                "forest needs at least one tree and one sample".into(),
            ));
        }
        Ok(())
    }

    /// Seed of the detector for one context, derived from the run seed.
    pub fn context_seed(&self, context: &Context) -> u64 {
        splitmix64(self.seed ^ splitmix64(context.bitmask()))
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Clusters of the training rows in one context's contextual subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGrouping<T> {
    /// Feature indices of the contextual subspace.
    pub features: Vec<usize>,
    /// z-score parameters of those features on the training rows.
    pub offset: Vec<T>,
    pub scale: Vec<T>,
    /// Centroids in z-scored contextual coordinates.
    pub centroids: Vec<Vec<T>>,
    pub assignment: Vec<usize>,
    pub group_sizes: Vec<usize>,
}

impl<T: Scalar> ReferenceGrouping<T> {
    pub fn n_groups(&self) -> usize {
        self.centroids.len()
    }

    fn standardized(&self, data: &Dataset<T>) -> Vec<T> {
        let mut out = data.gather_columns(&self.features);
        let k = self.features.len();
        for row in out.chunks_mut(k) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.offset[j]) / self.scale[j];
            }
        }
        out
    }

    /// Nearest training centroid of every row of `data`.
    pub fn assign(&self, data: &Dataset<T>) -> Vec<usize> {
        let z = self.standardized(data);
        z.chunks(self.features.len())
            .map(|p| nearest(p, &self.centroids))
            .collect()
    }
}

/// X-means reference groups over the contextual attributes of `context`.
pub fn fit_reference_groups<T: Scalar>(
    train: &Dataset<T>,
    context: &Context,
    params: &XMeansParams,
    seed: u64,
) -> Result<ReferenceGrouping<T>> {
    if context.contextual().is_empty() {
        return Err(Error::EmptyContext);
    }
    if train.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    context.validate(train.d())?;
    let features = context.contextual().to_vec();
    let k = features.len();
    let mut z = train.gather_columns(&features);
    let n = T::from_count(train.n());
    let mut offset = vec![T::zero(); k];
    let mut scale = vec![T::zero(); k];
    for row in z.chunks(k) {
        for (j, &v) in row.iter().enumerate() {
            offset[j] = offset[j] + v;
        }
    }
    offset.iter_mut().for_each(|m| *m = *m / n);
    for row in z.chunks(k) {
        for (j, &v) in row.iter().enumerate() {
            scale[j] = scale[j] + (v - offset[j]) * (v - offset[j]);
        }
    }
    scale.iter_mut().for_each(|s| {
        let sd = (*s / n).sqrt();
        *s = if sd > T::epsilon() { sd } else { T::one() };
    });
    for row in z.chunks_mut(k) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - offset[j]) / scale[j];
        }
    }

    let points = Points { data: &z, dim: k };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_size = params.min_group_size;
    let undersized = |assign: &[usize], groups: usize| {
        let mut sizes = vec![0usize; groups];
        assign.iter().for_each(|&c| sizes[c] += 1);
        sizes.iter().any(|&s| s < min_size)
    };
    let (mut centroids, mut assignment) = xmeans(points, params.max_clusters, params, &mut rng);
    if params.fallback_max_clusters < params.max_clusters
        && centroids.len() > 1
        && undersized(&assignment, centroids.len())
    {
        (centroids, assignment) = xmeans(points, params.fallback_max_clusters, params, &mut rng);
    }
    let (centroids, assignment) = merge_small_groups(points, centroids, assignment, min_size);
    let mut group_sizes = vec![0usize; centroids.len()];
    assignment.iter().for_each(|&c| group_sizes[c] += 1);
    Ok(ReferenceGrouping {
        features,
        offset,
        scale,
        centroids,
        assignment,
        group_sizes,
    })
}

/// Fitted detector for one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextModel<T> {
    pub context: Context,
    pub grouping: ReferenceGrouping<T>,
    pub forests: Vec<IsolationForestModel<T>>,
    pub unification: UnificationParams<T>,
}

/// A fitted model together with its unified training scores.
pub struct FittedContext<T> {
    pub model: ContextModel<T>,
    pub train_scores: Vec<T>,
}

/// Fits the reference groups, one forest per group, and the unification.
pub fn fit_context_model<T: Scalar>(
    train: &Dataset<T>,
    context: &Context,
    config: &DetectorConfig,
) -> Result<FittedContext<T>> {
    config.validate()?;
    let seed = config.context_seed(context);
    let grouping = fit_reference_groups(train, context, &config.xmeans, seed)?;
    let behavioral = context.behavioral().to_vec();
    let dim = behavioral.len();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); grouping.n_groups()];
    for (i, &g) in grouping.assignment.iter().enumerate() {
        members[g].push(i);
    }
    let mut raw = vec![T::zero(); train.n()];
    let mut forests = Vec::with_capacity(members.len());
    for rows in &members {
        let block = train.gather(rows, &behavioral);
        let points = Points { data: &block, dim };
        let forest = IsolationForestModel::fit(points, behavioral.clone(), config.forest, &mut rng);
        for (local, &i) in rows.iter().enumerate() {
            raw[i] = forest.score(points.get(local));
        }
        forests.push(forest);
    }
    let unification = UnificationParams::fit(&raw);
    let train_scores = unify(&unification, &raw);
    Ok(FittedContext {
        model: ContextModel {
            context: context.clone(),
            grouping,
            forests,
            unification,
        },
        train_scores,
    })
}

impl<T: Scalar> ContextModel<T> {
    fn check_dim(&self, points: &Dataset<T>) -> Result<()> {
        if points.d() != self.context.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.context.dim(),
                found: points.d(),
            });
        }
        Ok(())
    }

    fn raw_with_groups(&self, points: &Dataset<T>, groups: &[usize]) -> Vec<T> {
        let behavioral = self.context.behavioral();
        let block = points.gather_columns(behavioral);
        block
            .chunks(behavioral.len())
            .zip(groups)
            .map(|(p, &g)| self.forests[g].score(p))
            .collect()
    }

    /// Raw scores of arbitrary rows; each row is routed to the nearest
    /// training centroid in the contextual subspace.
    pub fn score_raw(&self, points: &Dataset<T>) -> Result<Vec<T>> {
        self.check_dim(points)?;
        let groups = self.grouping.assign(points);
        Ok(self.raw_with_groups(points, &groups))
    }

    /// Raw scores of the training rows, using their stored assignment.
    pub fn score_training_raw(&self, train: &Dataset<T>) -> Result<Vec<T>> {
        self.check_dim(train)?;
        if train.n() != self.grouping.assignment.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grouping.assignment.len(),
                found: train.n(),
            });
        }
        Ok(self.raw_with_groups(train, &self.grouping.assignment))
    }

    /// Unified scores of arbitrary rows with the training unification.
    pub fn score_unified(&self, points: &Dataset<T>) -> Result<Vec<T>> {
        Ok(unify(&self.unification, &self.score_raw(points)?))
    }
}

fn columns_to_matrix<T: Scalar>(n: usize, columns: &[Vec<T>], ids: Vec<u64>) -> Result<ScoreMatrix<T>> {
    let m = columns.len();
    let mut scores = Array2::<T>::zeros((n, m));
    for (c, col) in columns.iter().enumerate() {
        if col.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: col.len(),
            });
        }
        for (j, &v) in col.iter().enumerate() {
            scores[[j, c]] = v;
        }
    }
    ScoreMatrix::new(scores, ids)
}

/// Fits every context and collects the unified training scores, keeping the
/// models for later scoring.
pub fn build_score_matrix<T: Scalar>(
    train: &Dataset<T>,
    contexts: &ContextSet,
    config: &DetectorConfig,
) -> Result<(ScoreMatrix<T>, Vec<ContextModel<T>>)> {
    if contexts.is_empty() {
        return Err(Error::InvalidParameter("context set is empty".into()));
    }
    let fitted: Vec<FittedContext<T>> = contexts
        .contexts()
        .par_iter()
        .map(|c| fit_context_model(train, c, config))
        .collect::<Result<_>>()?;
    let (models, columns): (Vec<_>, Vec<_>) =
        fitted.into_iter().map(|f| (f.model, f.train_scores)).unzip();
    let matrix = columns_to_matrix(train.n(), &columns, contexts.bitmasks())?;
    Ok((matrix, models))
}

/// Unified scores of the training rows and, optionally, held-out rows for
/// every context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextScores<T> {
    pub train: ScoreMatrix<T>,
    pub test: Option<ScoreMatrix<T>>,
}

/// Fits each context, scores train (and test), and drops the model. Memory
/// stays proportional to the score matrices rather than the forests.
pub fn score_contexts<T: Scalar>(
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    contexts: &ContextSet,
    config: &DetectorConfig,
    cache: Option<&ModelCache>,
) -> Result<ContextScores<T>> {
    if contexts.is_empty() {
        return Err(Error::InvalidParameter("context set is empty".into()));
    }
    if let Some(t) = test {
        if t.d() != train.d() {
            return Err(Error::DimensionMismatch {
                expected: train.d(),
                found: t.d(),
            });
        }
    }
    let key = cache.map(|_| cache::run_key(train, test, config));
    let columns: Vec<(Vec<T>, Option<Vec<T>>)> = contexts
        .contexts()
        .par_iter()
        .map(|context| {
            if let (Some(cache), Some(key)) = (cache, key.as_deref()) {
                if let Some(hit) = cache.load::<T>(key, config.seed, context.bitmask())? {
                    if hit.train.len() == train.n() && hit.test.as_ref().map(Vec::len) == test.map(Dataset::n) {
                        return Ok((hit.train, hit.test));
                    }
                }
            }
            let fitted = fit_context_model(train, context, config)?;
            let test_col = test.map(|t| fitted.model.score_unified(t)).transpose()?;
            if let (Some(cache), Some(key)) = (cache, key.as_deref()) {
                cache.store(
                    key,
                    config.seed,
                    context.bitmask(),
                    &CachedColumns {
                        train: fitted.train_scores.clone(),
                        test: test_col.clone(),
                    },
                )?;
            }
            Ok((fitted.train_scores, test_col))
        })
        .collect::<Result<_>>()?;
    let (train_cols, test_cols): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
    let train_matrix = columns_to_matrix(train.n(), &train_cols, contexts.bitmasks())?;
    let test_matrix = match test {
        Some(t) => {
            let cols: Vec<Vec<T>> = test_cols.into_iter().map(|c| c.unwrap_or_default()).collect();
            Some(columns_to_matrix(t.n(), &cols, contexts.bitmasks())?)
        }
        None => None,
    };
    Ok(ContextScores {
        train: train_matrix,
        test: test_matrix,
    })
}
