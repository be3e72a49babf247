//! End-to-end runs: split, project, score contexts, learn importances,
//! combine, evaluate on held-out rows.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{auc_pr, auc_roc};
use crate::active::{run_active_loop, ActiveRun, GroundTruthOracle, QueryKind, QueryStrategy, DEFAULT_LAMBDA, DEFAULT_THRESHOLD};
use crate::context::{apply_pca, enumerate_contexts, fit_pca_adaptive, ContextSet, PcaProjection, Standardizer, DEFAULT_PCA_COMPONENTS, ENUMERATION_LIMIT};
use crate::detector::{score_contexts, ContextScores, DetectorConfig, ModelCache};
use crate::ensemble::{context_index, CombinerKind, EnsemblePlan};
use crate::error::{Error, Result};
use crate::model::{stratified_split_indices, Dataset, ScoreMatrix, SplitIndices};
use crate::scalar::Scalar;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;
pub const DEFAULT_SEEDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_id: String,
    pub strategies: Vec<QueryKind>,
    pub budgets: Vec<usize>,
    pub combiners: Vec<CombinerKind>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub lambda: f64,
    pub threshold: f64,
    pub pca_k: usize,
    pub detector: DetectorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_id: "dataset".into(),
            strategies: vec![QueryKind::LowConfidenceAnomaly],
            budgets: vec![100],
            combiners: vec![CombinerKind::WisCon],
            seeds: (0..DEFAULT_SEEDS as u64).collect(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            lambda: DEFAULT_LAMBDA,
            threshold: DEFAULT_THRESHOLD,
            pca_k: DEFAULT_PCA_COMPONENTS,
            detector: DetectorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.strategies.is_empty() {
            return bad("at least one strategy is required");
        }
        if self.budgets.is_empty() {
            return bad("budget list is empty");
        }
        if self.budgets.contains(&0) {
            return bad("budgets must be at least 1");
        }
        if self.combiners.is_empty() {
            return bad("at least one combiner is required");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if self.pca_k == 0 {
            return bad("pca_k must be positive");
        }
        self.strategy(QueryKind::Random, 0).validate().map_err(|e| Error::Config(e.to_string()))?;
        self.detector.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn strategy(&self, kind: QueryKind, seed: u64) -> QueryStrategy {
        QueryStrategy::new(kind, seed).with_lambda(self.lambda).with_threshold(self.threshold)
    }
}

/// One seed's split, projection and per-context scores, shared by every
/// (strategy, budget, combiner) cell evaluated on it.
#[derive(Debug, Clone)]
pub struct PreparedRun<T> {
    pub seed: u64,
    /// Rows of the source dataset in each split, in split order.
    pub split: SplitIndices,
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub pca: Option<PcaProjection<T>>,
    pub contexts: ContextSet,
    pub train_scores: Arc<ScoreMatrix<T>>,
    pub test_scores: ScoreMatrix<T>,
    pub true_column: Option<usize>,
    pub prepare_secs: f64,
}

/// Type of the optional held-out split.
pub type Projected<T> = (Dataset<T>, Option<Dataset<T>>, Option<PcaProjection<T>>);

/// Leaves narrow data untouched; wider data is z-scored and projected onto
/// `pca_k` principal components, both fitted on `train` only.
pub fn project_features<T: Scalar>(train: Dataset<T>, test: Option<Dataset<T>>, pca_k: usize) -> Result<Projected<T>> {
    if train.d() < ENUMERATION_LIMIT {
        return Ok((train, test, None));
    }
    let z = Standardizer::fit(&train);
    let ztrain = z.transform(&train)?;
    let proj = fit_pca_adaptive(&ztrain, pca_k.min(ENUMERATION_LIMIT - 1))?;
    let test = test.map(|t| z.transform(&t).and_then(|zt| apply_pca(&proj, &zt))).transpose()?;
    Ok((apply_pca(&proj, &ztrain)?, test, Some(proj)))
}

pub fn prepare_run<T: Scalar>(data: &Dataset<T>, seed: u64, config: &ExperimentConfig, cache: Option<&ModelCache>) -> Result<PreparedRun<T>> {
    let start = Instant::now();
    if data.labels().is_none() {
        return Err(Error::MissingLabels);
    }
    let split = stratified_split_indices(data.labels().ok_or(Error::MissingLabels)?, config.train_fraction, seed)?;
    let (train, test) = (data.subset(&split.train), data.subset(&split.test));
    let (train, test, pca) = project_features(train, Some(test), config.pca_k)?;
    let test = test.expect("test split present");
    let contexts = enumerate_contexts(train.d())?;
    let detector = config.detector.with_seed(seed);
    let ContextScores { train: train_scores, test: test_scores } = score_contexts(&train, Some(&test), &contexts, &detector, cache)?;
    let test_scores = test_scores.expect("test rows were scored");
    let true_column = train.true_context().map(|c| context_index(c, &train_scores)).transpose()?;
    Ok(PreparedRun {
        seed,
        split,
        train,
        test,
        pca,
        contexts,
        train_scores: Arc::new(train_scores),
        test_scores,
        true_column,
        prepare_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub seed: u64,
    pub strategy: QueryKind,
    pub budget: usize,
    pub combiner: CombinerKind,
    pub auc_pr: f64,
    pub auc_roc: f64,
    pub runtime_secs: f64,
    pub kept_contexts: usize,
    pub audit: Option<String>,
}

/// Active loop outcome for one (strategy, budget) cell of a prepared run.
#[derive(Debug, Clone)]
pub struct LearnedCell<T> {
    pub strategy: QueryKind,
    pub budget: usize,
    pub run: ActiveRun<T>,
    pub loop_secs: f64,
}

pub fn learn<T: Scalar>(prepared: &PreparedRun<T>, kind: QueryKind, budget: usize, config: &ExperimentConfig) -> Result<LearnedCell<T>> {
    let start = Instant::now();
    let labels = prepared.train.labels().ok_or(Error::MissingLabels)?;
    let mut oracle = GroundTruthOracle::new(labels);
    let strategy = config.strategy(kind, prepared.seed);
    let run = run_active_loop(prepared.train_scores.clone(), &mut oracle, strategy, budget)?;
    Ok(LearnedCell {
        strategy: kind,
        budget,
        run,
        loop_secs: start.elapsed().as_secs_f64(),
    })
}

/// Test-set scores of one combiner.
pub fn combine<T: Scalar>(prepared: &PreparedRun<T>, importances: &[T], combiner: CombinerKind) -> Result<(EnsemblePlan<T>, Vec<T>)> {
    if combiner == CombinerKind::TrueContext && prepared.true_column.is_none() {
        return Err(Error::Config("combiner 'true' needs a dataset with a known true context".into()));
    }
    let plan = EnsemblePlan::new(combiner, &prepared.train_scores, importances, prepared.true_column)?;
    let scores = plan.apply(&prepared.test_scores)?.final_scores;
    Ok((plan, scores))
}

pub fn evaluate<T: Scalar>(
    prepared: &PreparedRun<T>,
    cell: &LearnedCell<T>,
    combiner: CombinerKind,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let (plan, scores) = combine(prepared, cell.run.state.importances(), combiner)?;
    let labels = prepared.test.labels().ok_or(Error::MissingLabels)?;
    let pr = auc_pr(&scores, labels)?;
    let roc = auc_roc(&scores, labels)?;
    Ok(ExperimentReport {
        dataset: config.dataset_id.clone(),
        seed: prepared.seed,
        strategy: cell.strategy,
        budget: cell.budget,
        combiner,
        auc_pr: pr,
        auc_roc: roc,
        runtime_secs: prepared.prepare_secs + cell.loop_secs + start.elapsed().as_secs_f64(),
        kept_contexts: plan.kept_count(),
        audit: None,
    })
}

/// Fails early on configurations the data cannot satisfy.
pub fn check_preconditions<T: Scalar>(data: &Dataset<T>, config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    if config.combiners.contains(&CombinerKind::TrueContext) {
        if data.true_context().is_none() {
            return Err(Error::Config("combiner 'true' needs a dataset with a known true context".into()));
        }
        if data.d() >= ENUMERATION_LIMIT {
            return Err(Error::Config("combiner 'true' is unavailable once features are projected".into()));
        }
    }
    let anomalies = labels.iter().filter(|&&l| l == 1).count();
    if anomalies == 0 || anomalies == labels.len() {
        return Err(Error::SingleClass);
    }
    let pool = (config.train_fraction * data.n() as f64).round() as usize;
    if let Some(&b) = config.budgets.iter().find(|&&b| b > pool) {
        return Err(Error::BudgetExceedsPool { budget: b, pool });
    }
    Ok(())
}

/// Everything a run produces for one seed.
pub struct SeedOutcome<T> {
    pub reports: Vec<ExperimentReport>,
    pub cells: Vec<LearnedCell<T>>,
}

/// Runs every (strategy, budget, combiner) cell on one prepared seed.
pub fn run_seed<T: Scalar>(prepared: &PreparedRun<T>, config: &ExperimentConfig) -> Result<SeedOutcome<T>> {
    let mut reports = Vec::new();
    let mut cells = Vec::new();
    for &kind in &config.strategies {
        for &budget in &config.budgets {
            let cell = learn(prepared, kind, budget, config)?;
            for &combiner in &config.combiners {
                reports.push(evaluate(prepared, &cell, combiner, config)?);
            }
            cells.push(cell);
        }
    }
    Ok(SeedOutcome { reports, cells })
}

/// Full pipeline over every configured seed.
pub fn run_experiment<T: Scalar>(data: &Dataset<T>, config: &ExperimentConfig, cache: Option<&ModelCache>) -> Result<Vec<ExperimentReport>> {
    check_preconditions(data, config)?;
    let mut reports = Vec::new();
    for &seed in &config.seeds {
        let prepared = prepare_run(data, seed, config, cache)?;
        reports.extend(run_seed(&prepared, config)?.reports);
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub strategy: QueryKind,
    pub budget: usize,
    pub combiner: CombinerKind,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and standard deviation of each metric per (dataset, strategy,
/// budget, combiner), in first-seen order.
pub fn summarize(reports: &[ExperimentReport]) -> Vec<SummaryRow> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(String, String, usize, String), Vec<&ExperimentReport>> = BTreeMap::new();
    for r in reports {
        let key = (r.dataset.clone(), r.strategy.to_string(), r.budget, r.combiner.to_string());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut rows = Vec::new();
    for key in order {
        let group = &groups[&key];
        let first = group[0];
        for (metric, pick) in [("auc_pr", (|r: &ExperimentReport| r.auc_pr) as fn(&ExperimentReport) -> f64), ("auc_roc", |r| r.auc_roc)] {
            let values: Vec<f64> = group.iter().map(|r| pick(r)).collect();
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow {
                dataset: first.dataset.clone(),
                strategy: first.strategy,
                budget: first.budget,
                combiner: first.combiner,
                metric: metric.into(),
                mean,
                std,
                runs: group.len(),
            });
        }
    }
    rows
}

pub fn reports_jsonl(reports: &[ExperimentReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "strategy", "budget", "combiner", "metric", "mean", "std", "runs"])?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.strategy.to_string(),
            r.budget.to_string(),
            r.combiner.to_string(),
            r.metric.clone(),
            r.mean.to_string(),
            r.std.to_string(),
            r.runs.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
