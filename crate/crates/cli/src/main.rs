mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};

const WORKERS_VAR: &str = "WISCON_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "wiscon", version, about = "Contextual anomaly detection with an actively weighted context ensemble")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV plus manifest.
    Generate(GenerateArgs),
    /// Run the active loop with a simulated oracle and evaluate.
    Run(RunArgs),
    /// Budget sweep; rerunning into the same directory skips finished cells.
    Sweep(RunArgs),
    /// Start the HTTP oracle service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Preset name or generator spec file.
    spec: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// File stem of the outputs; defaults to the preset or spec name.
    #[arg(long)]
    name: Option<String>,
    /// Overrides the seed of a preset.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// JSON run config; other flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV file with an optional `label` column.
    #[arg(long, conflicts_with = "generate")]
    pub dataset: Option<PathBuf>,
    /// Preset name or generator spec file.
    #[arg(long)]
    pub generate: Option<String>,
    #[arg(long)]
    pub dataset_id: Option<String>,
    /// Comma-separated list of random, ce, kl, mla, lca.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long, conflicts_with = "budgets")]
    pub budget: Option<usize>,
    /// Comma-separated budgets.
    #[arg(long)]
    pub budgets: Option<String>,
    /// Comma-separated list of wiscon, single, true, avg, max.
    #[arg(long)]
    pub combiner: Option<String>,
    /// Number of seeds, run as 0..N.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub max_clusters: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub pca_k: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for cached per-context scores.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Answer queries over HTTP at this address instead of from the labels.
    #[arg(long)]
    pub serve: Option<String>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Persist sessions here and restore them on startup.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Score cache for in-memory sessions; a store keeps its own.
    #[arg(long, conflicts_with = "store")]
    cache_dir: Option<PathBuf>,
}

fn configure_workers() -> CliResult<()> {
    let Ok(value) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("{WORKERS_VAR} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(CliError::runtime)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    configure_workers()?;
    match cli.command {
        Command::Generate(a) => commands::generate(&a.spec, &a.out, a.name.as_deref(), a.seed),
        Command::Run(a) => {
            let serve = a.serve.clone();
            let config = commands::build_config(a, false)?;
            match serve {
                Some(addr) => commands::run_interactive(&config, &addr),
                None => commands::run(&config, false),
            }
        }
        Command::Sweep(a) => {
            if a.serve.is_some() {
                return Err(CliError::config("--serve is only available for run"));
            }
            let config = commands::build_config(a, true)?;
            commands::run(&config, true)
        }
        Command::Serve(a) => commands::serve(&a.addr, a.store.as_deref(), a.cache_dir.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return CliError::config(e.to_string().trim().to_string()).report(),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
