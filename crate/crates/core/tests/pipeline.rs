use wiscon_core::active::QueryKind;
use wiscon_core::datagen::{gen_cad, gen_global, CadContextSpec, CadGeneratorSpec, CovarianceRule};
use wiscon_core::detector::{build_score_matrix, score_contexts, DetectorConfig, ModelCache};
use wiscon_core::ensemble::{score_test, CombinerKind, EnsemblePlan};
use wiscon_core::eval::{context_performance_distribution, prepare_run, run_experiment, summarize, ExperimentConfig};
use wiscon_core::{enumerate_contexts, Dataset, DatasetF32};

fn small_config(seeds: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset_id: "small".into(),
        strategies: vec![QueryKind::LowConfidenceAnomaly, QueryKind::Random],
        budgets: vec![10],
        combiners: vec![CombinerKind::WisCon, CombinerKind::Average],
        seeds: (0..seeds).collect(),
        detector: DetectorConfig::default().with_max_clusters(4),
        ..ExperimentConfig::default()
    }
}

#[test]
fn experiment_is_deterministic_and_complete() {
    let data: Dataset = gen_global(400, 3, 2, 0.05, 2).unwrap();
    let config = small_config(2);
    let a = run_experiment(&data, &config, None).unwrap();
    let b = run_experiment(&data, &config, None).unwrap();
    assert_eq!(a.len(), 2 * 2 * 2);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.auc_pr, x.auc_roc, x.kept_contexts), (y.auc_pr, y.auc_roc, y.kept_contexts));
        assert!((0.0..=1.0).contains(&x.auc_pr) && (0.0..=1.0).contains(&x.auc_roc));
    }
    let rows = summarize(&a);
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().all(|r| r.runs == 2));
}

#[test]
fn single_precision_pipeline_runs() {
    let data: DatasetF32 = gen_global(300, 3, 2, 0.05, 8).unwrap();
    let reports = run_experiment(&data, &small_config(1), None).unwrap();
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| r.auc_roc > 0.5));
}

#[test]
fn cached_scores_match_fresh_ones() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ModelCache::new(dir.path()).unwrap();
    let data: Dataset = gen_global(300, 3, 2, 0.05, 4).unwrap();
    let config = small_config(1);
    let fresh = prepare_run(&data, 0, &config, None).unwrap();
    let cold = prepare_run(&data, 0, &config, Some(&cache)).unwrap();
    let warm = prepare_run(&data, 0, &config, Some(&cache)).unwrap();
    assert_eq!(fresh.train_scores, cold.train_scores);
    assert_eq!(cold.train_scores, warm.train_scores);
    assert_eq!(cold.test_scores, warm.test_scores);
}

#[test]
fn retained_models_score_like_streamed_columns() {
    let data: Dataset = gen_global(300, 3, 2, 0.05, 6).unwrap();
    let (train, test) = (data.subset(&(0..200).collect::<Vec<_>>()), data.subset(&(200..300).collect::<Vec<_>>()));
    let contexts = enumerate_contexts(3).unwrap();
    let config = DetectorConfig::default().with_max_clusters(4).with_seed(1);
    let (matrix, models) = build_score_matrix(&train, &contexts, &config).unwrap();
    let streamed = score_contexts(&train, Some(&test), &contexts, &config, None).unwrap();
    assert_eq!(matrix, streamed.train);
    let importances = vec![1.0; contexts.len()];
    let plan = EnsemblePlan::new(CombinerKind::Average, &matrix, &importances, None).unwrap();
    let via_models = score_test(&models, &plan, &test).unwrap();
    let via_columns = plan.apply(streamed.test.as_ref().unwrap()).unwrap();
    assert_eq!(via_models, via_columns.final_scores);
}

#[test]
fn true_context_ranks_near_the_top() {
    let spec = CadGeneratorSpec {
        n_points: 1_500,
        d: 5,
        contexts: vec![CadContextSpec {
            contextual: vec![0, 1],
            context_components: 4,
            behavior_components: 4,
            n_anomalies: 45,
        }],
        covariance: CovarianceRule::Euclidean,
        seed: 12,
    };
    let data = gen_cad::<f64>(&spec).unwrap().dataset;
    let config = ExperimentConfig {
        seeds: vec![0, 1],
        ..small_config(2)
    };
    let perf = context_performance_distribution(&data, &config, None).unwrap();
    let truth = data.true_context().unwrap().bitmask();
    let value = perf.mean_of(truth).unwrap();
    let below = perf.rank_fraction_below(value);
    assert_eq!(perf.bitmasks.len(), 30);
    assert!(below >= 0.9, "true context AUC-PR {value:.3} beats only {:.0}% of contexts", 100.0 * below);
    assert!(value > perf.median());
}
