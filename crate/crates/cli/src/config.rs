use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wiscon_core::active::{QueryKind, DEFAULT_LAMBDA, DEFAULT_THRESHOLD};
use wiscon_core::context::DEFAULT_PCA_COMPONENTS;
use wiscon_core::datagen::{GeneratorSpec, Preset};
use wiscon_core::detector::DetectorConfig;
use wiscon_core::ensemble::CombinerKind;
use wiscon_core::eval::{ExperimentConfig, DEFAULT_SEEDS, DEFAULT_TRAIN_FRACTION};
use wiscon_service::{DatasetSource, SessionConfig};

use crate::error::{CliError, CliResult};

/// Everything that determines a run. The snapshot written next to the
/// outputs reproduces the run with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub dataset_id: Option<String>,
    pub strategies: Vec<QueryKind>,
    pub budgets: Vec<usize>,
    pub combiners: Vec<CombinerKind>,
    pub seeds: Vec<u64>,
    pub max_clusters: usize,
    pub lambda: f64,
    pub threshold: f64,
    pub pca_k: usize,
    pub train_fraction: f64,
    pub out: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(dataset: DatasetSource, out: PathBuf) -> Self {
        Self {
            dataset,
            dataset_id: None,
            strategies: vec![QueryKind::LowConfidenceAnomaly],
            budgets: vec![100],
            combiners: vec![CombinerKind::WisCon],
            seeds: (0..DEFAULT_SEEDS as u64).collect(),
            max_clusters: DetectorConfig::default().xmeans.max_clusters,
            lambda: DEFAULT_LAMBDA,
            threshold: DEFAULT_THRESHOLD,
            pca_k: DEFAULT_PCA_COMPONENTS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            out,
            cache_dir: None,
        }
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
        })
    }

    pub fn dataset_id(&self) -> String {
        if let Some(id) = &self.dataset_id {
            return id.clone();
        }
        match &self.dataset {
            DatasetSource::Csv(p) => p.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string(),
            DatasetSource::Generate(GeneratorSpec::Preset { name, .. }) => name.as_str().to_string(),
            DatasetSource::Generate(_) => "generated".into(),
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            dataset_id: self.dataset_id(),
            strategies: self.strategies.clone(),
            budgets: self.budgets.clone(),
            combiners: self.combiners.clone(),
            seeds: self.seeds.clone(),
            train_fraction: self.train_fraction,
            lambda: self.lambda,
            threshold: self.threshold,
            pca_k: self.pca_k,
            detector: DetectorConfig::default().with_max_clusters(self.max_clusters),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.experiment().validate().map_err(|e| CliError::config(e.to_string()))
    }

    /// The single-cell session equivalent, for the interactive oracle.
    pub fn session(&self) -> CliResult<SessionConfig> {
        if self.strategies.len() != 1 || self.budgets.len() != 1 || self.combiners.len() != 1 || self.seeds.len() != 1 {
            return Err(CliError::config(
                "--serve drives one session: give exactly one strategy, budget, combiner and seed",
            ));
        }
        let mut s = SessionConfig::new(self.dataset.clone(), self.budgets[0]);
        s.strategy = self.strategies[0];
        s.combiner = self.combiners[0];
        s.seed = self.seeds[0];
        s.lambda = self.lambda;
        s.threshold = self.threshold;
        s.max_clusters = self.max_clusters;
        s.pca_k = self.pca_k;
        s.train_fraction = self.train_fraction;
        Ok(s)
    }

    pub fn write_snapshot(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// A preset name, or a path to a generator spec file.
pub fn resolve_generator(arg: &str, seed: Option<u64>) -> CliResult<GeneratorSpec> {
    if let Ok(name) = arg.parse::<Preset>() {
        return Ok(GeneratorSpec::Preset {
            name,
            seed: seed.unwrap_or(0),
        });
    }
    let path = Path::new(arg);
    if !path.exists() {
        let presets: Vec<String> = Preset::ALL.iter().map(|p| p.as_str().to_string()).collect();
        return Err(CliError::config(format!(
            "{arg:?} is neither a spec file nor a preset ({})",
            presets.join(", ")
        )));
    }
    let spec = GeneratorSpec::from_file(path).map_err(|e| CliError::config(e.to_string()))?;
    Ok(match (spec, seed) {
        (GeneratorSpec::Preset { name, .. }, Some(s)) => GeneratorSpec::Preset { name, seed: s },
        (spec, _) => spec,
    })
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::config(format!("{what} list is empty")));
    }
    items
        .into_iter()
        .map(|s| s.parse::<T>().map_err(|e| CliError::config(format!("bad {what} {s:?}: {e}"))))
        .collect()
}
