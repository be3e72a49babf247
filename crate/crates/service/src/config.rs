use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use wiscon_core::active::{QueryKind, DEFAULT_LAMBDA, DEFAULT_THRESHOLD};
use wiscon_core::context::DEFAULT_PCA_COMPONENTS;
use wiscon_core::datagen::{generate, load_with_manifest, CsvSchema, GeneratorSpec};
use wiscon_core::detector::DetectorConfig;
use wiscon_core::ensemble::CombinerKind;
use wiscon_core::eval::{ExperimentConfig, DEFAULT_TRAIN_FRACTION};
use wiscon_core::{Dataset, Error, Result};

/// Where a session's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// CSV file; a `label` column is optional.
    Csv(PathBuf),
    Generate(GeneratorSpec),
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Csv(path) => Ok(load_with_manifest::<f64>(path, &CsvSchema::default())?.0),
            DatasetSource::Generate(spec) => Ok(generate::<f64>(spec)?.dataset),
        }
    }
}

fn default_strategy() -> QueryKind {
    QueryKind::LowConfidenceAnomaly
}

fn default_combiner() -> CombinerKind {
    CombinerKind::WisCon
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_max_clusters() -> usize {
    DetectorConfig::default().xmeans.max_clusters
}

fn default_pca_k() -> usize {
    DEFAULT_PCA_COMPONENTS
}

fn default_train_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub dataset: DatasetSource,
    pub budget: usize,
    #[serde(default = "default_strategy")]
    pub strategy: QueryKind,
    #[serde(default = "default_combiner")]
    pub combiner: CombinerKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_max_clusters")]
    pub max_clusters: usize,
    #[serde(default = "default_pca_k")]
    pub pca_k: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

impl SessionConfig {
    pub fn new(dataset: DatasetSource, budget: usize) -> Self {
        Self {
            dataset,
            budget,
            strategy: default_strategy(),
            combiner: default_combiner(),
            seed: 0,
            lambda: default_lambda(),
            threshold: default_threshold(),
            max_clusters: default_max_clusters(),
            pca_k: default_pca_k(),
            train_fraction: default_train_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        self.experiment().validate()
    }

    /// The equivalent single-cell experiment configuration.
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            dataset_id: "session".into(),
            strategies: vec![self.strategy],
            budgets: vec![self.budget],
            combiners: vec![self.combiner],
            seeds: vec![self.seed],
            train_fraction: self.train_fraction,
            lambda: self.lambda,
            threshold: self.threshold,
            pca_k: self.pca_k,
            detector: DetectorConfig::default().with_max_clusters(self.max_clusters),
        }
    }
}
