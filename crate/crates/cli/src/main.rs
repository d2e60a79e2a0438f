use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use arena_core::analytics::{self, best_values_by_method, stats_battery, DEFAULT_BOOTSTRAP_SAMPLES};
use arena_core::campaign::{expand_repeats, load_trajectories, run_suite, CampaignConfig, MethodSpec, Trajectory};
use arena_core::complexity::{complexity_report, METRIC_NAMES};
use arena_core::llm::LlmProviderConfig;
use arena_core::optimizer::bo::{AcquisitionKind, BoConfig, FeaturizationMode};
use arena_core::{AggregationMode, AggregationPolicy, BenchmarkDataset};
use arena_service::auth::TokenTable;
use arena_service::{ServiceConfig, ServiceState};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "arena", version, about = "Benchmark arena for categorical black-box optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset manifest; exits nonzero with a line-numbered diagnostic.
    ValidateDataset { path: PathBuf },
    /// Six complexity metrics, their normalized values and the radar score.
    Complexity {
        #[arg(required = true, num_args = 2..)]
        datasets: Vec<PathBuf>,
        #[arg(long, default_value = "lower_bound")]
        policy: AggregationMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run repeated optimization campaigns and write one trajectory per run.
    Run(RunArgs),
    /// Summaries over a directory of trajectories.
    Analyze {
        #[command(subcommand)]
        kind: Analysis,
    },
    /// HTTP service for human campaigns, downloads and the leaderboard.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory for the event log and snapshots; state is in-memory without it.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// File with one `token handle` pair per line; enables bearer auth.
        #[arg(long)]
        tokens: Option<PathBuf>,
        /// Datasets to register at startup.
        #[arg(long = "dataset")]
        datasets: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Random,
    Bo,
    Llm,
    Mock,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, default_value_t = arena_core::optimizer::DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = arena_core::optimizer::DEFAULT_BATCH)]
    batch: usize,
    #[arg(long, default_value_t = arena_core::campaign::DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "lower_bound")]
    agg: AggregationMode,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value = "ei")]
    acquisition: AcquisitionKind,
    #[arg(long, default_value = "one_hot")]
    featurization: FeaturizationMode,
    /// Descriptor CSV, one per parameter in order (descriptor featurization).
    #[arg(long = "descriptors")]
    descriptors: Vec<PathBuf>,
    /// JSON provider configuration (endpoint, model, api_key_env, ...).
    #[arg(long)]
    provider: Option<PathBuf>,
    /// JSON array of scripted replies for the offline provider.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Background document placed in the first user message; repeatable.
    #[arg(long = "context-doc")]
    context_docs: Vec<PathBuf>,
    /// Concurrent runs; defaults to the number of cores.
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Subcommand)]
enum Analysis {
    /// Per-run cumulative entropy, entropy-to-best and per-parameter entropies.
    Entropy(AnalyzeArgs),
    /// First iteration beyond 80% and 95% of the dataset optimum.
    Convergence {
        #[command(flatten)]
        args: AnalyzeArgs,
        /// Dataset manifests providing the true optimum; the best observed
        /// value across runs is used for datasets not given here.
        #[arg(long = "dataset")]
        datasets: Vec<PathBuf>,
    },
    /// Pairwise Wilcoxon p-values and Cliff's delta over best values per run.
    Stats {
        #[command(flatten)]
        args: AnalyzeArgs,
        /// Per-method medians with bootstrap intervals.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_SAMPLES)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        include_aborted: bool,
    },
    /// Duplicate counts and invalid-suggestion rates.
    Duplicates(AnalyzeArgs),
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long)]
    runs: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn method_spec(args: &RunArgs) -> Result<MethodSpec> {
    Ok(match args.method {
        Method::Random => MethodSpec::Random,
        Method::Bo => MethodSpec::Bo {
            config: BoConfig {
                acquisition: args.acquisition,
                featurization: args.featurization,
                ..BoConfig::default()
            },
            descriptor_paths: args.descriptors.clone(),
        },
        Method::Llm => {
            let path = args.provider.as_deref().context("--provider is required for llm runs")?;
            let provider: LlmProviderConfig = serde_json::from_value(read_json(path)?)
                .with_context(|| format!("provider configuration {}", path.display()))?;
            MethodSpec::Llm {
                provider,
                context_paths: args.context_docs.clone(),
            }
        }
        Method::Mock => {
            let path = args.script.as_deref().context("--script is required for mock runs")?;
            let serde_json::Value::Array(script) = read_json(path)? else {
                bail!("{}: script must be a JSON array", path.display());
            };
            MethodSpec::Mock {
                script,
                context_paths: args.context_docs.clone(),
            }
        }
    })
}

fn run(args: RunArgs) -> Result<()> {
    let dataset = Arc::new(BenchmarkDataset::load(&args.dataset)?);
    let mut config = CampaignConfig::new(args.dataset.display().to_string(), method_spec(&args)?);
    config.budget = args.budget;
    config.batch = args.batch;
    config.repeats = args.repeats;
    config.base_seed = args.seed;
    config.aggregation = args.agg;
    config.output = Some(args.out.clone());
    std::fs::create_dir_all(&args.out)?;

    let parallelism = args
        .parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let runs = run_suite(&expand_repeats(&config, dataset), parallelism)?;
    for t in &runs {
        let best = t.best().map_or("-".to_string(), |(i, v)| format!("{v} @ {i}"));
        match &t.abort_reason {
            Some(reason) => println!("{}  aborted after {}: {reason}", t.run_id, t.records.len()),
            None => println!("{}  best {best}  duplicates {}", t.run_id, t.duplicates()),
        }
    }
    eprintln!("{} trajectories written to {}", runs.len(), args.out.display());
    Ok(())
}

fn complexity(datasets: &[PathBuf], mode: AggregationMode, seed: u64, out: Option<&Path>) -> Result<()> {
    let loaded = datasets
        .iter()
        .map(|p| BenchmarkDataset::load(p).with_context(|| p.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    let reports = complexity_report(&loaded, &AggregationPolicy::new(mode), seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["dataset".to_string()];
    header.extend(METRIC_NAMES.iter().map(|m| m.to_string()));
    header.extend(METRIC_NAMES.iter().map(|m| format!("norm_{m}")));
    header.push("radar_score".into());
    w.write_record(&header)?;
    for r in &reports {
        let mut row = vec![r.dataset.clone()];
        row.extend(r.raw_metrics().iter().map(f64::to_string));
        row.extend(r.normalized_metrics.iter().map(f64::to_string));
        row.push(r.radar_area_score.to_string());
        w.write_record(&row)?;
    }
    emit(out, &String::from_utf8(w.into_inner()?)?)
}

/// True optimum per dataset name, from manifests when given, else the best
/// value any run observed.
fn reference_maxima(runs: &[Trajectory], manifests: &[PathBuf]) -> Result<HashMap<String, f64>> {
    let mut refs = HashMap::new();
    for t in runs {
        if let Some((_, v)) = t.best() {
            let e = refs.entry(t.dataset.clone()).or_insert(v);
            if t.reporting_goal().better(v, *e) {
                *e = v;
            }
        }
    }
    let observed: Vec<String> = refs.keys().cloned().collect();
    for p in manifests {
        let ds = BenchmarkDataset::load(p).with_context(|| p.display().to_string())?;
        let policy = runs
            .iter()
            .find(|t| t.dataset == ds.name)
            .map_or_else(|| AggregationPolicy::for_objectives(AggregationMode::default(), ds.objectives()), |t| t.policy);
        if let Some((_, v)) = ds.true_best(&policy)? {
            refs.insert(ds.name.clone(), v);
        }
    }
    for name in observed {
        if !manifests.is_empty() && !refs.contains_key(&name) {
            eprintln!("warning: no manifest for `{name}`; using the best observed value");
        }
    }
    Ok(refs)
}

fn analyze(kind: Analysis) -> Result<()> {
    let runs_of = |a: &AnalyzeArgs| -> Result<Vec<Trajectory>> {
        let runs = load_trajectories(&a.runs)?;
        if runs.is_empty() {
            bail!("no trajectories in {}", a.runs.display());
        }
        Ok(runs)
    };
    match kind {
        Analysis::Entropy(a) => emit(a.out.as_deref(), &analytics::entropy_csv(&runs_of(&a)?)),
        Analysis::Duplicates(a) => emit(a.out.as_deref(), &analytics::duplicates_csv(&runs_of(&a)?)),
        Analysis::Convergence { args, datasets } => {
            let runs = runs_of(&args)?;
            if datasets.is_empty() {
                eprintln!("warning: no --dataset given; convergence is measured against the best observed value");
            }
            let refs = reference_maxima(&runs, &datasets)?;
            let csv = analytics::convergence_csv(&runs, |t| refs.get(&t.dataset).copied().unwrap_or(f64::NAN));
            emit(args.out.as_deref(), &csv)
        }
        Analysis::Stats {
            args,
            summary,
            baseline,
            bootstrap,
            seed,
            include_aborted,
        } => {
            let runs = runs_of(&args)?;
            let groups = best_values_by_method(&runs, include_aborted);
            if let Some(b) = &baseline {
                if !groups.iter().any(|(m, _)| m == b) {
                    bail!("baseline `{b}` not among methods");
                }
            }
            let report = stats_battery(&groups, baseline.as_deref(), bootstrap, seed);
            emit(args.out.as_deref(), &analytics::pairs_csv(&report))?;
            if let Some(path) = summary {
                emit(Some(&path), &analytics::summary_csv(&report))?;
            }
            Ok(())
        }
    }
}

fn serve(port: u16, host: &str, data_dir: Option<PathBuf>, tokens: Option<PathBuf>, datasets: &[PathBuf]) -> Result<()> {
    let tokens = tokens
        .map(|p| TokenTable::load(&p).map_err(anyhow::Error::msg))
        .transpose()?;
    let state = ServiceState::open(ServiceConfig {
        data_dir,
        tokens,
        snapshot_every: None,
    })?;
    for p in datasets {
        let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
        let summary = state
            .register_dataset(&text)
            .map_err(|e| anyhow::anyhow!("{}: {}", p.display(), e.message))?;
        eprintln!("registered dataset `{}`", summary.id);
    }
    let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
    tokio::runtime::Runtime::new()?.block_on(arena_service::serve(addr, state))?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::ValidateDataset { path } => match BenchmarkDataset::load(&path) {
            Ok(ds) => {
                println!(
                    "{}: ok ({} parameters, {} of {} assignments measured)",
                    path.display(),
                    ds.space().len(),
                    ds.measured_keys(),
                    ds.space().size()
                );
                Ok(())
            }
            Err(e) => Err(anyhow::anyhow!("{}: {e}", path.display())),
        },
        Command::Complexity {
            datasets,
            policy,
            seed,
            out,
        } => complexity(&datasets, policy, seed, out.as_deref()),
        Command::Run(args) => run(args),
        Command::Analyze { kind } => analyze(kind),
        Command::Serve {
            port,
            host,
            data_dir,
            tokens,
            datasets,
        } => serve(port, &host, data_dir, tokens, &datasets),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
