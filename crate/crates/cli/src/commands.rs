use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use wiscon_core::active::QueryKind;
use wiscon_core::datagen::{generate as generate_dataset, write_generated, GeneratorSpec};
use wiscon_core::detector::ModelCache;
use wiscon_core::ensemble::CombinerKind;
use wiscon_core::eval::{
    check_preconditions, evaluate, learn, mean_std, prepare_run, reports_jsonl, summarize, summary_csv, ExperimentReport,
};
use wiscon_core::Dataset;
use wiscon_service::{new_session_id, AppState, DatasetSource, Session};

use crate::config::{parse_list, resolve_generator, RunConfig};
use crate::error::{CliError, CliResult};
use crate::RunArgs;

const SWEEP_BUDGETS: [usize; 3] = [20, 60, 100];
const POLL_INTERVAL: Duration = Duration::from_millis(200);

pub fn generate(spec: &str, out: &Path, name: Option<&str>, seed: Option<u64>) -> CliResult<()> {
    let resolved = resolve_generator(spec, seed)?;
    let stem = match (name, &resolved) {
        (Some(n), _) => n.to_string(),
        (None, GeneratorSpec::Preset { name, .. }) => name.as_str().to_string(),
        (None, _) => Path::new(spec).file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_string(),
    };
    let stem = stem.trim_end_matches(".spec").to_string();
    let generated = generate_dataset::<f64>(&resolved).map_err(CliError::loading)?;
    let (csv, manifest) = write_generated(&generated, out, &stem)?;
    let m = &generated.manifest;
    println!(
        "{}",
        json!({"csv": csv, "manifest": manifest, "n": m.n, "d": m.d, "anomalies": m.anomaly_indices.len()})
    );
    Ok(())
}

pub fn build_config(args: RunArgs, sweep: bool) -> CliResult<RunConfig> {
    let flag_dataset = match (&args.dataset, &args.generate) {
        (Some(p), _) => Some(DatasetSource::Csv(p.clone())),
        (None, Some(g)) => Some(DatasetSource::Generate(resolve_generator(g, None)?)),
        (None, None) => None,
    };
    let mut config = match (&args.config, flag_dataset) {
        (Some(path), ds) => {
            let mut c = RunConfig::from_file(path)?;
            if let Some(ds) = ds {
                c.dataset = ds;
            }
            c
        }
        (None, Some(ds)) => {
            let mut c = RunConfig::new(ds, PathBuf::from("wiscon-out"));
            if sweep {
                c.budgets = SWEEP_BUDGETS.to_vec();
            }
            c
        }
        (None, None) => return Err(CliError::config("one of --dataset, --generate or --config is required")),
    };
    if let Some(id) = args.dataset_id {
        config.dataset_id = Some(id);
    }
    if let Some(s) = &args.strategy {
        config.strategies = parse_list::<QueryKind>(s, "strategy")?;
    }
    if let Some(b) = args.budget {
        config.budgets = vec![b];
    }
    if let Some(b) = &args.budgets {
        config.budgets = parse_list::<usize>(b, "budget")?;
    }
    if let Some(c) = &args.combiner {
        config.combiners = parse_list::<CombinerKind>(c, "combiner")?;
    }
    if let Some(n) = args.seeds {
        config.seeds = (0..n).collect();
    }
    if let Some(v) = args.max_clusters {
        config.max_clusters = v;
    }
    if let Some(v) = args.lambda {
        config.lambda = v;
    }
    if let Some(v) = args.threshold {
        config.threshold = v;
    }
    if let Some(v) = args.pca_k {
        config.pca_k = v;
    }
    if let Some(v) = args.train_fraction {
        config.train_fraction = v;
    }
    if let Some(v) = args.out {
        config.out = v;
    }
    if let Some(v) = args.cache_dir {
        config.cache_dir = Some(v);
    }
    config.validate()?;
    Ok(config)
}

fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn cell_name(seed: u64, strategy: QueryKind, budget: usize) -> String {
    format!("seed{seed}_{strategy}_b{budget}")
}

/// Stored outcome of one (seed, strategy, budget) cell.
#[derive(Debug, Serialize, Deserialize)]
struct CellRecord {
    reports: Vec<ExperimentReport>,
}

fn load_cell(path: &Path, combiners: &[CombinerKind]) -> Option<Vec<ExperimentReport>> {
    let record: CellRecord = serde_json::from_slice(&fs::read(path).ok()?).ok()?;
    combiners
        .iter()
        .map(|c| record.reports.iter().find(|r| r.combiner == *c).cloned())
        .collect()
}

/// Fields that must agree for finished cells to be reused.
fn same_experiment(a: &RunConfig, b: &RunConfig) -> bool {
    a.dataset == b.dataset
        && a.max_clusters == b.max_clusters
        && a.lambda == b.lambda
        && a.threshold == b.threshold
        && a.pca_k == b.pca_k
        && a.train_fraction == b.train_fraction
}

fn load_data(config: &RunConfig) -> CliResult<Dataset> {
    config.dataset.load().map_err(CliError::loading)
}

fn open_cache(config: &RunConfig) -> CliResult<Option<ModelCache>> {
    config.cache_dir.as_ref().map(ModelCache::new).transpose().map_err(CliError::runtime)
}

pub fn run(config: &RunConfig, sweep: bool) -> CliResult<()> {
    let data = load_data(config)?;
    let experiment = config.experiment();
    check_preconditions(&data, &experiment)?;
    let out = &config.out;
    let snapshot = out.join("config.json");
    if sweep && snapshot.exists() {
        if let Ok(previous) = RunConfig::from_file(&snapshot) {
            if !same_experiment(&previous, config) {
                return Err(CliError::config(format!(
                    "{} holds a sweep with different settings; choose another --out",
                    out.display()
                )));
            }
        }
    }
    config.write_snapshot(out)?;
    let cache = open_cache(config)?;
    let audit_dir = out.join("audit");
    let cells_dir = out.join("cells");
    fs::create_dir_all(&audit_dir)?;
    if sweep {
        fs::create_dir_all(&cells_dir)?;
    }

    let mut reports = Vec::new();
    for &seed in &experiment.seeds {
        let mut done = BTreeMap::new();
        if sweep {
            for &kind in &experiment.strategies {
                for &budget in &experiment.budgets {
                    let path = cells_dir.join(format!("{}.json", cell_name(seed, kind, budget)));
                    if let Some(r) = load_cell(&path, &experiment.combiners) {
                        done.insert((kind.as_str(), budget), r);
                    }
                }
            }
        }
        let total = experiment.strategies.len() * experiment.budgets.len();
        let prepared = if done.len() == total {
            log::info!("seed {seed}: all {total} cells already done");
            None
        } else {
            let p = prepare_run(&data, seed, &experiment, cache.as_ref())?;
            log::info!("seed {seed}: prepared {} contexts in {:.1}s", p.contexts.len(), p.prepare_secs);
            Some(p)
        };
        for &kind in &experiment.strategies {
            for &budget in &experiment.budgets {
                if let Some(r) = done.remove(&(kind.as_str(), budget)) {
                    reports.extend(r);
                    continue;
                }
                let prepared = prepared.as_ref().expect("prepared when a cell is missing");
                let cell = learn(prepared, kind, budget, &experiment)?;
                let name = cell_name(seed, kind, budget);
                let audit_path = audit_dir.join(format!("{name}.jsonl"));
                write_atomic(&audit_path, cell.run.audit_jsonl()?.as_bytes())?;
                let mut cell_reports = Vec::new();
                for &combiner in &experiment.combiners {
                    let mut r = evaluate(prepared, &cell, combiner, &experiment)?;
                    r.audit = Some(format!("audit/{name}.jsonl"));
                    log::info!("seed {seed} {kind} b={budget} {combiner}: auc_pr {:.4} auc_roc {:.4}", r.auc_pr, r.auc_roc);
                    cell_reports.push(r);
                }
                if sweep {
                    let record = CellRecord {
                        reports: cell_reports.clone(),
                    };
                    write_atomic(&cells_dir.join(format!("{name}.json")), &serde_json::to_vec(&record)?)?;
                }
                reports.extend(cell_reports);
            }
        }
    }

    write_atomic(&out.join("reports.jsonl"), reports_jsonl(&reports)?.as_bytes())?;
    let summary = summary_csv(&summarize(&reports))?;
    write_atomic(&out.join("summary.csv"), summary.as_bytes())?;
    if sweep {
        write_atomic(&out.join("budget_curve.csv"), budget_curve(&reports)?.as_bytes())?;
    }
    print!("{summary}");
    Ok(())
}

/// One row per (strategy, budget, combiner) with both metrics side by side.
fn budget_curve(reports: &[ExperimentReport]) -> CliResult<String> {
    let mut groups: BTreeMap<(usize, usize, usize), Vec<&ExperimentReport>> = BTreeMap::new();
    let rank = |k: QueryKind| QueryKind::ALL.iter().position(|&x| x == k).unwrap_or(usize::MAX);
    let crank = |k: CombinerKind| CombinerKind::ALL.iter().position(|&x| x == k).unwrap_or(usize::MAX);
    for r in reports {
        groups.entry((rank(r.strategy), r.budget, crank(r.combiner))).or_default().push(r);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "strategy", "budget", "combiner", "auc_pr_mean", "auc_pr_std", "auc_roc_mean", "auc_roc_std", "runs"])
        .map_err(CliError::runtime)?;
    for group in groups.values() {
        let first = group[0];
        let (pr, pr_std) = mean_std(&group.iter().map(|r| r.auc_pr).collect::<Vec<_>>());
        let (roc, roc_std) = mean_std(&group.iter().map(|r| r.auc_roc).collect::<Vec<_>>());
        w.write_record([
            first.dataset.clone(),
            first.strategy.to_string(),
            first.budget.to_string(),
            first.combiner.to_string(),
            pr.to_string(),
            pr_std.to_string(),
            roc.to_string(),
            roc_std.to_string(),
            group.len().to_string(),
        ])
        .map_err(CliError::runtime)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::runtime(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn runtime() -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::runtime)
}

/// Serves a single session and waits until its budget is spent.
pub fn run_interactive(config: &RunConfig, addr: &str) -> CliResult<()> {
    let session_config = config.session()?;
    let cache = open_cache(config)?;
    let session = Session::build(new_session_id(), session_config, cache.as_ref()).map_err(session_error)?;
    config.write_snapshot(&config.out)?;
    let rt = runtime()?;
    let result = rt.block_on(async {
        let state = AppState::new();
        let id = state.insert(session).await;
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let url = format!("http://{}", listener.local_addr()?);
        println!("{}", json!({"session_id": id, "url": url}));
        std::io::stdout().flush()?;
        let server = tokio::spawn(wiscon_service::serve(listener, state.clone()));
        loop {
            let done = state.inspect(&id, |s| s.learner().is_complete()).await.unwrap_or(true);
            if done {
                break;
            }
            tokio::time::sleep(POLL_INTERVAL).await;
        }
        let result = state.inspect(&id, |s| s.result().map(|r| (r, s.audit_jsonl()))).await;
        server.abort();
        Ok::<_, CliError>(result)
    })?;
    let (payload, audit) = result
        .ok_or_else(|| CliError::runtime("session vanished"))?
        .map_err(session_error)?;
    let audit = audit.map_err(session_error)?;
    let audit_dir = config.out.join("audit");
    fs::create_dir_all(&audit_dir)?;
    write_atomic(&audit_dir.join("session.jsonl"), audit.as_bytes())?;
    write_atomic(&config.out.join("result.json"), &serde_json::to_vec_pretty(&payload)?)?;
    if let Some(test) = &payload.test {
        if let (Some(pr), Some(roc)) = (test.auc_pr, test.auc_roc) {
            let report = ExperimentReport {
                dataset: config.dataset_id(),
                seed: config.seeds[0],
                strategy: config.strategies[0],
                budget: config.budgets[0],
                combiner: config.combiners[0],
                auc_pr: pr,
                auc_roc: roc,
                runtime_secs: 0.0,
                kept_contexts: payload.ensemble.kept_contexts.len(),
                audit: Some("audit/session.jsonl".into()),
            };
            write_atomic(&config.out.join("reports.jsonl"), reports_jsonl(&[report])?.as_bytes())?;
        }
    }
    Ok(())
}

fn session_error(e: wiscon_service::SessionError) -> CliError {
    use wiscon_service::SessionError as E;
    match e {
        E::Config(inner) => CliError::loading(inner),
        E::Internal(inner) => inner.into(),
        other => CliError::runtime(other),
    }
}

pub fn serve(addr: &str, store: Option<&Path>, cache_dir: Option<&Path>) -> CliResult<()> {
    let state = match (store, cache_dir) {
        (Some(dir), _) => AppState::open(dir)?,
        (None, Some(dir)) => AppState::with_cache(dir)?,
        (None, None) => AppState::new(),
    };
    let rt = runtime()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let url = format!("http://{}", listener.local_addr()?);
        println!("{}", json!({"url": url}));
        std::io::stdout().flush()?;
        log::info!("listening on {url}");
        wiscon_service::serve(listener, state).await?;
        Ok(())
    })
}
