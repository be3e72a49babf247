//! Metrics, experiment orchestration and result analysis.

mod analysis;
mod experiment;
mod metrics;

pub use analysis::{
    confidence_histogram, context_auc_pr, context_performance_distribution, median, ConfidenceHistogram,
    ContextPerformance, Histogram, CONFIDENCE_BINS,
};
pub use experiment::{
    check_preconditions, combine, evaluate, learn, mean_std, prepare_run, project_features, reports_jsonl, run_experiment, run_seed,
    summarize, summary_csv, ExperimentConfig, ExperimentReport, LearnedCell, PreparedRun, SeedOutcome, SummaryRow,
    DEFAULT_SEEDS, DEFAULT_TRAIN_FRACTION,
};
pub use metrics::{auc_pr, auc_roc};
