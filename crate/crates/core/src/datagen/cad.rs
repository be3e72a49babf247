//! Gaussian-mixture generator with contextual anomalies.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_dataset, Context, Dataset};
use crate::scalar::Scalar;

/// Side length of the cube the component centroids are drawn from.
pub const CENTROID_RANGE: f64 = 10.0;

/// One context of a generator spec. The first context of a spec defines the
/// mixture; later contexts only say which features are contextual and how
/// many anomalies violate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CadContextSpec {
    pub contextual: Vec<usize>,
    #[serde(default = "default_components")]
    pub context_components: usize,
    #[serde(default = "default_components")]
    pub behavior_components: usize,
    pub n_anomalies: usize,
}

fn default_components() -> usize {
    5
}

/// How the diagonal covariance of the mixture components is derived from the
/// centroids. Either way each diagonal entry is a quarter of a mean
/// inter-centroid distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceRule {
    /// Mean Euclidean distance between the centroids of the attribute group,
    /// shared by every dimension of that group.
    #[default]
    Euclidean,
    /// Mean absolute centroid difference along each dimension separately.
    PerDimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CadGeneratorSpec {
    /// Number of normal points; anomalies are added on top.
    pub n_points: usize,
    pub d: usize,
    pub contexts: Vec<CadContextSpec>,
    #[serde(default)]
    pub covariance: CovarianceRule,
    pub seed: u64,
}

/// Per-row provenance of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadMetadata {
    /// Contextual mixture component of each row.
    pub context_component: Vec<usize>,
    /// Behavioral mixture component each row's behavior was drawn from.
    pub behavior_component: Vec<usize>,
    /// Context component to behavior component mapping.
    pub mapping: Vec<usize>,
    /// Which spec context each anomaly violates; `None` for normal rows.
    pub anomaly_context: Vec<Option<usize>>,
    pub contexts: Vec<Context>,
}

#[derive(Debug, Clone)]
pub struct CadDataset<T> {
    pub dataset: Dataset<T>,
    pub metadata: CadMetadata,
}

impl CadGeneratorSpec {
    fn single(n_points: usize, half: usize, components: usize, anomalies: usize, seed: u64) -> Self {
        Self {
            n_points,
            d: 2 * half,
            contexts: vec![CadContextSpec {
                contextual: (0..half).collect(),
                context_components: components,
                behavior_components: components,
                n_anomalies: anomalies,
            }],
            covariance: CovarianceRule::default(),
            seed,
        }
    }

    fn nested(n_points: usize, anomalies: [usize; 3], seed: u64) -> Self {
        let contexts = [5usize, 6, 7]
            .iter()
            .zip(anomalies)
            .map(|(&c, a)| CadContextSpec {
                contextual: (0..c).collect(),
                context_components: 5,
                behavior_components: 5,
                n_anomalies: a,
            })
            .collect();
        Self {
            n_points,
            d: 10,
            contexts,
            covariance: CovarianceRule::default(),
            seed,
        }
    }

    /// One 5/5 context, 25,000 normals and 250 anomalies.
    pub fn synthetic1(seed: u64) -> Self {
        Self::single(25_000, 5, 5, 250, seed)
    }

    /// `synthetic1` at 5,000 rows with the same 1% anomaly rate.
    pub fn synthetic1_small(seed: u64) -> Self {
        Self::single(4_950, 5, 5, 50, seed)
    }

    /// Three nested contexts (5/5, 6/4, 7/3), 5,000 normals and 100
    /// anomalies split 50/30/20.
    pub fn synthetic2(seed: u64) -> Self {
        Self::nested(5_000, [50, 30, 20], seed)
    }

    /// `synthetic2` with 500/300/200 anomalies.
    pub fn synthetic2_large(seed: u64) -> Self {
        Self::nested(5_000, [500, 300, 200], seed)
    }

    /// 25/25 features, 5,100 rows at 2% anomalies.
    pub fn synthetic3(seed: u64) -> Self {
        Self::single(4_998, 25, 5, 102, seed)
    }

    pub fn n_anomalies(&self) -> usize {
        self.contexts.iter().map(|c| c.n_anomalies).sum()
    }

    pub fn validate(&self) -> Result<Vec<Context>> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.contexts.is_empty() {
            return bad("at least one context is required".into());
        }
        if self.n_points == 0 {
            return bad("n_points must be positive".into());
        }
        let contexts = self
            .contexts
            .iter()
            .map(|c| Context::new(c.contextual.iter().copied(), self.d))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::InfeasibleSpec(e.to_string()))?;
        let first = &self.contexts[0];
        if first.context_components == 0 || first.behavior_components == 0 {
            return bad("component counts must be positive".into());
        }
        let k = first.context_components.max(first.behavior_components);
        if k > self.n_points {
            return bad(format!("{k} components exceed {} points", self.n_points));
        }
        if self.n_anomalies() > 0 && first.context_components < 2 {
            return bad("anomalies need at least two mixture components".into());
        }
        for c in &self.contexts[1..] {
            if c.context_components != first.context_components || c.behavior_components != first.behavior_components {
                return bad("all contexts share the first context's mixture".into());
            }
        }
        Ok(contexts)
    }
}

/// Component over all `d` features: contextual part from `U_i`, behavioral
/// part from `V_f(i)`.
struct Mixture {
    means: Vec<Vec<f64>>,
    stds: Vec<f64>,
    mapping: Vec<usize>,
}

fn pairwise_spread(centroids: &[Vec<f64>], dim: usize) -> f64 {
    let k = centroids.len();
    if k < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            total += (centroids[a][dim] - centroids[b][dim]).abs();
        }
    }
    total / (k * (k - 1) / 2) as f64
}

fn mean_euclidean(centroids: &[Vec<f64>]) -> f64 {
    let k = centroids.len();
    if k < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            let sq: f64 = centroids[a].iter().zip(&centroids[b]).map(|(x, y)| (x - y).powi(2)).sum();
            total += sq.sqrt();
        }
    }
    total / (k * (k - 1) / 2) as f64
}

fn group_stds(centroids: &[Vec<f64>], dim: usize, rule: CovarianceRule) -> Vec<f64> {
    match rule {
        CovarianceRule::Euclidean => vec![(mean_euclidean(centroids) / 4.0).sqrt(); dim],
        CovarianceRule::PerDimension => (0..dim).map(|k| (pairwise_spread(centroids, k) / 4.0).sqrt()).collect(),
    }
}

fn sample_centroids(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.0..CENTROID_RANGE)).collect())
        .collect()
}

impl Mixture {
    fn new(context: &Context, spec: &CadContextSpec, rule: CovarianceRule, rng: &mut ChaCha8Rng) -> Self {
        let cu = context.contextual();
        let cb = context.behavioral();
        let ku = spec.context_components;
        let kv = spec.behavior_components;
        let u = sample_centroids(ku, cu.len(), rng);
        let v = sample_centroids(kv, cb.len(), rng);
        let d = cu.len() + cb.len();
        let mut stds = vec![0.0; d];
        for (&f, s) in cu.iter().zip(group_stds(&u, cu.len(), rule)) {
            stds[f] = s;
        }
        for (&f, s) in cb.iter().zip(group_stds(&v, cb.len(), rule)) {
            stds[f] = s;
        }
        // bijective when the counts match, otherwise balanced
        let mut targets: Vec<usize> = (0..ku).map(|i| i % kv).collect();
        targets.shuffle(rng);
        let means = (0..ku)
            .map(|i| {
                let mut m = vec![0.0; d];
                for (k, &f) in cu.iter().enumerate() {
                    m[f] = u[i][k];
                }
                for (k, &f) in cb.iter().enumerate() {
                    m[f] = v[targets[i]][k];
                }
                m
            })
            .collect();
        Self {
            means,
            stds,
            mapping: targets,
        }
    }

    fn draw(&self, component: usize, features: &[usize], out: &mut [f64], rng: &mut ChaCha8Rng) {
        for &f in features {
            let z: f64 = StandardNormal.sample(rng);
            out[f] = self.means[component][f] + self.stds[f] * z;
        }
    }
}

/// Generates normals from the first context's mixture and injects each
/// context's anomalies by pairing a point's contextual values with behavior
/// drawn from a component its context does not map to.
pub fn gen_cad<T: Scalar>(spec: &CadGeneratorSpec) -> Result<CadDataset<T>> {
    let contexts = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mixture = Mixture::new(&contexts[0], &spec.contexts[0], spec.covariance, &mut rng);
    let ku = spec.contexts[0].context_components;
    let all: Vec<usize> = (0..spec.d).collect();

    let n = spec.n_points + spec.n_anomalies();
    let mut rows: Vec<(Vec<f64>, usize, usize, Option<usize>)> = Vec::with_capacity(n);
    for _ in 0..spec.n_points {
        let i = rng.gen_range(0..ku);
        let mut x = vec![0.0; spec.d];
        mixture.draw(i, &all, &mut x, &mut rng);
        rows.push((x, i, mixture.mapping[i], None));
    }
    for (c, (context, cspec)) in contexts.iter().zip(&spec.contexts).enumerate() {
        for _ in 0..cspec.n_anomalies {
            let i = rng.gen_range(0..ku);
            let candidates: Vec<usize> = (0..ku).filter(|&j| mixture.mapping[j] != mixture.mapping[i]).collect();
            let j = *candidates.choose(&mut rng).ok_or_else(|| {
                Error::InfeasibleSpec("every component maps to the same behavior".into())
            })?;
            let mut x = vec![0.0; spec.d];
            mixture.draw(i, context.contextual(), &mut x, &mut rng);
            mixture.draw(j, context.behavioral(), &mut x, &mut rng);
            rows.push((x, i, mixture.mapping[j], Some(c)));
        }
    }
    rows.shuffle(&mut rng);

    let mut features = Array2::<T>::zeros((n, spec.d));
    let mut labels = Vec::with_capacity(n);
    let mut metadata = CadMetadata {
        context_component: Vec::with_capacity(n),
        behavior_component: Vec::with_capacity(n),
        mapping: mixture.mapping.clone(),
        anomaly_context: Vec::with_capacity(n),
        contexts: contexts.clone(),
    };
    for (r, (x, i, v, a)) in rows.into_iter().enumerate() {
        for (f, value) in x.into_iter().enumerate() {
            features[[r, f]] = T::lit(value);
        }
        labels.push(u8::from(a.is_some()));
        metadata.context_component.push(i);
        metadata.behavior_component.push(v);
        metadata.anomaly_context.push(a);
    }
    let dataset = validate_dataset(features, Some(labels))?.with_true_context(contexts[0].clone())?;
    Ok(CadDataset { dataset, metadata })
}
