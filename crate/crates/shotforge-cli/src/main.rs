//! `shotforge` — search for the few-shot examples that make an LLM estimate
//! story points well, and report the results.
//!
//! Subcommands: `optimize` (run or resume the NSGA-II search), `baselines`
//! (constant and random-guess reference scores), `evaluate` (score one
//! explicit shot list), `report` (markdown comparison from a finished run),
//! and `cache stats|purge`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or input
//! error, 3 backend failure.

mod config;
mod report_md;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shotforge::baselines::{
    mean_baseline, median_baseline, random_guess_baseline, BaselineResult, RandomGuessMode,
};
use shotforge::domain::{Chromosome, Dataset};
use shotforge::estimator::{read_entries, Cache, Estimator};
use shotforge::pipeline::{
    self, evaluate_individual, genes_label, run_optimization, EvaluatedIndividual, PipelineError,
    CACHE_FILE,
};

use config::CliConfig;
use report_md::{load_comparison, load_pareto, render_comparison};

/// Errors carrying their process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input data → exit 2.
    Input(String),
    /// The estimator backend failed → exit 3.
    Backend(String),
    /// Anything else (I/O, serialization) → exit 1.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Backend(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Input(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Estimate(inner) => CliError::Backend(inner.to_string()),
            PipelineError::Domain(_)
            | PipelineError::Stats(_)
            | PipelineError::Evolve(_)
            | PipelineError::InvalidInput(_)
            | PipelineError::IncompatibleCheckpoint(_) => CliError::Input(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "shotforge",
    version,
    about = "Multi-objective few-shot example selection for story-point estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) the multi-objective search and write run artifacts.
    Optimize(OptimizeArgs),
    /// Score the mean, median, and random-guess reference predictors.
    Baselines(BaselinesArgs),
    /// Estimate the test split once with an explicit list of shot keys.
    Evaluate(EvaluateArgs),
    /// Render a markdown comparison table from a finished run directory.
    Report(ReportArgs),
    /// Inspect or clear a run directory's response cache.
    Cache(CacheCmd),
}

/// Flags that override config-file keys (flags win).
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Issues file (.json self-contained, .csv with --split/--project).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Split JSON for CSV datasets.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Project name for CSV datasets.
    #[arg(long)]
    project: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<config::BackendKind>,
    /// Recorded responses for the replay backend.
    #[arg(long)]
    replay_fixture: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    population_size: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    crossover_rate: Option<f64>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(long)]
    max_init_len: Option<usize>,
    /// Force one zero-shot chromosome into the initial population.
    #[arg(long)]
    seed_zero_shot: bool,
    /// `categorical` or `independent_flips`.
    #[arg(long)]
    mutation_scheme: Option<String>,
    #[arg(long)]
    ci_p: Option<f64>,
    #[arg(long)]
    ci_k: Option<usize>,
    /// Evaluate only the first N test issues.
    #[arg(long)]
    test_truncation: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Keep the global non-dominated archive over every evaluation.
    #[arg(long)]
    archive: bool,
    /// Snap estimates to the nearest allowed story-point value.
    #[arg(long)]
    snap_to_allowed: bool,
    /// Error out instead of falling back to the median on exhausted retries.
    #[arg(long)]
    no_fallback: bool,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    retry_backoff_ms: Option<u64>,
    #[arg(long)]
    endpoint_url: Option<String>,
    #[arg(long)]
    model_name: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    requests_per_minute: Option<u32>,
    /// Checkpoint and stop once this generation index is reached.
    #[arg(long)]
    stop_after: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut CliConfig) -> Result<(), CliError> {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$field = Some(v.clone());
                }
            };
            ($field:ident, copy) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(dataset);
        set!(split);
        set!(project);
        set!(replay_fixture);
        if let Some(v) = self.backend {
            cfg.backend = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        set!(seed, copy);
        set!(population_size, copy);
        set!(generations, copy);
        set!(crossover_rate, copy);
        set!(mutation_rate, copy);
        set!(max_init_len, copy);
        if self.seed_zero_shot {
            cfg.seed_zero_shot = true;
        }
        if let Some(scheme) = &self.mutation_scheme {
            cfg.mutation_scheme = match scheme.as_str() {
                "categorical" => shotforge::evolve::MutationScheme::Categorical,
                "independent_flips" => shotforge::evolve::MutationScheme::IndependentFlips,
                other => {
                    return Err(CliError::Input(format!(
                        "unknown mutation scheme {other:?}; use categorical or independent_flips"
                    )))
                }
            };
        }
        set!(ci_p, copy);
        set!(ci_k, copy);
        if let Some(v) = self.test_truncation {
            cfg.test_truncation = Some(v);
        }
        set!(parallelism, copy);
        if self.archive {
            cfg.archive = true;
        }
        if self.snap_to_allowed {
            cfg.snap_to_allowed = true;
        }
        if self.no_fallback {
            cfg.fallback_enabled = false;
        }
        set!(max_retries, copy);
        set!(retry_backoff_ms, copy);
        if let Some(v) = &self.endpoint_url {
            cfg.endpoint_url = v.clone();
        }
        if let Some(v) = &self.model_name {
            cfg.model_name = v.clone();
        }
        set!(temperature, copy);
        set!(timeout_secs, copy);
        set!(requests_per_minute, copy);
        if let Some(v) = self.stop_after {
            cfg.stop_after = Some(v);
        }
        Ok(())
    }
}

#[derive(Args)]
struct OptimizeArgs {
    /// Config file (TOML, or a JSON run snapshot).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue an existing run directory from its snapshot and checkpoint.
    #[arg(long, conflicts_with = "config")]
    resume: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct BaselinesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also estimate random guessing by Monte Carlo with this many draws.
    #[arg(long)]
    draws: Option<u32>,
    /// Write the results as JSON to this path as well.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated train-issue keys to use as shots, in prompt order.
    /// Empty (or omitted) evaluates the zero-shot prompt.
    #[arg(long, value_delimiter = ',')]
    shots: Vec<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReportArgs {
    /// A completed run directory (contains pareto.json).
    run_dir: PathBuf,
    /// Dataset to score baselines on, for side-by-side columns.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Split JSON when --dataset is a CSV.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Project name when --dataset is a CSV.
    #[arg(long)]
    project: Option<String>,
    /// Published-results fixture (JSON) to append with its average
    /// improvement.
    #[arg(long)]
    comparison: Option<PathBuf>,
    /// Write the markdown here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CacheCmd {
    #[command(subcommand)]
    action: CacheAction,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Entry count, distinct prompts, and fallback share of a run's cache.
    Stats { run_dir: PathBuf },
    /// Delete a run's cache file.
    Purge { run_dir: PathBuf },
}

fn main() -> ExitCode {
    // Die quietly when stdout's reader goes away (`shotforge ... | head`),
    // like any other pipeline-friendly tool; run artifacts are written
    // atomically before the summary prints, so nothing is left torn.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Baselines(args) => cmd_baselines(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Report(args) => cmd_report(args),
        Command::Cache(cmd) => match cmd.action {
            CacheAction::Stats { run_dir } => cmd_cache_stats(&run_dir),
            CacheAction::Purge { run_dir } => cmd_cache_purge(&run_dir),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Loads the config file (or defaults) and applies flag overrides.
fn resolve(config_path: Option<&Path>, overrides: &Overrides) -> Result<CliConfig, CliError> {
    let mut cfg = match config_path {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

const SNAPSHOT_FILE: &str = "config.snapshot.json";

fn write_snapshot(run_dir: &Path, cfg: &CliConfig) -> Result<(), CliError> {
    let path = run_dir.join(SNAPSHOT_FILE);
    let mut text = serde_json::to_string_pretty(cfg).expect("config serializes");
    text.push('\n');
    if path.exists() {
        let existing = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let stored: CliConfig = serde_json::from_str(&existing)
            .map_err(|e| CliError::Input(format!("corrupt snapshot {}: {e}", path.display())))?;
        let mut comparable = stored.clone();
        // Location, interruption point, and worker count may differ between
        // invocations of the same run.
        comparable.output_dir = cfg.output_dir.clone();
        comparable.stop_after = cfg.stop_after;
        comparable.parallelism = cfg.parallelism;
        if &comparable != cfg {
            return Err(CliError::Input(format!(
                "{} holds a different configuration; use a fresh output directory",
                run_dir.display()
            )));
        }
        return Ok(());
    }
    std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_optimize(args: OptimizeArgs) -> Result<(), CliError> {
    let (cfg, run_dir) = match &args.resume {
        Some(dir) => {
            let snapshot = dir.join(SNAPSHOT_FILE);
            let mut cfg = CliConfig::load(&snapshot)?;
            // Only run-control knobs may change on resume; everything that
            // determines results comes from the snapshot.
            if let Some(v) = args.overrides.parallelism {
                cfg.parallelism = v;
            }
            cfg.stop_after = args.overrides.stop_after;
            (cfg, dir.clone())
        }
        None => {
            let cfg = resolve(args.config.as_deref(), &args.overrides)?;
            let run_dir = cfg.run_dir();
            (cfg, run_dir)
        }
    };
    cfg.validate()?;
    let dataset = cfg.load_dataset()?;
    let backend = cfg.build_backend()?;
    std::fs::create_dir_all(&run_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", run_dir.display())))?;
    write_snapshot(&run_dir, &cfg)?;

    let outcome = run_optimization(&dataset, backend, cfg.run_config(), &run_dir)?;
    if !outcome.completed {
        println!(
            "checkpointed after generation {} in {}; resume with --resume",
            outcome.history.last().map_or(0, |h| h.generation),
            run_dir.display()
        );
        return Ok(());
    }

    println!("rank-0 front ({} members):", outcome.front.len());
    println!("{:>10}  {:>8}  {:>5}  genes", "SAE", "CI", "shots");
    for m in &outcome.front {
        println!(
            "{:>10.4}  {:>8.4}  {:>5}  {}",
            m.objectives.sae,
            m.objectives.ci,
            m.objectives.n_shots,
            genes_label(&m.chromosome)
        );
    }
    println!(
        "zero-shot reference: SAE {:.4}, CI {:.4}",
        outcome.zero_shot.objectives.sae, outcome.zero_shot.objectives.ci
    );
    println!("backend calls: {}", outcome.backend_calls);
    println!("report: {}", run_dir.join(pipeline::REPORT_FILE).display());
    Ok(())
}

/// Dataset pieces the baseline and evaluate commands share.
fn train_and_test(dataset: &Dataset) -> Result<(Vec<f64>, Vec<shotforge::Issue>), CliError> {
    let train_sps: Vec<f64> = dataset
        .train_issues()
        .iter()
        .map(|i| i.story_points)
        .collect();
    let test: Vec<shotforge::Issue> = dataset
        .effective_test_set()
        .map_err(|e| CliError::Input(e.to_string()))?
        .into_iter()
        .cloned()
        .collect();
    Ok((train_sps, test))
}

fn compute_baselines(
    dataset: &Dataset,
    draws: Option<u32>,
    seed: u64,
) -> Result<Vec<BaselineResult>, CliError> {
    let (train_sps, test) = train_and_test(dataset)?;
    let to_cli = |e: shotforge::baselines::BaselineError| CliError::Input(e.to_string());
    let mut results = vec![
        mean_baseline(&train_sps, &test).map_err(to_cli)?,
        median_baseline(&train_sps, &test).map_err(to_cli)?,
        random_guess_baseline(&train_sps, &test, RandomGuessMode::Exact).map_err(to_cli)?,
    ];
    if let Some(draws) = draws {
        results.push(
            random_guess_baseline(&train_sps, &test, RandomGuessMode::Sampled { seed, draws })
                .map_err(to_cli)?,
        );
    }
    Ok(results)
}

fn cmd_baselines(args: BaselinesArgs) -> Result<(), CliError> {
    let cfg = resolve(args.config.as_deref(), &args.overrides)?;
    let dataset = cfg.load_dataset()?;
    let results = compute_baselines(&dataset, args.draws, cfg.seed)?;

    println!("baselines — {}", dataset.project);
    println!("{:<14} {:>10}  {:>10}  {:>12}", "method", "MAE", "predicts", "MC std err");
    for r in &results {
        println!(
            "{:<14} {:>10.4}  {:>10}  {:>12}",
            r.name.to_string(),
            r.mae,
            r.prediction.map_or("—".to_owned(), |p| format!("{p:.4}")),
            r.mc_std_error
                .map_or("—".to_owned(), |s| format!("{s:.6}")),
        );
    }

    if let Some(path) = &args.json {
        let mut text = serde_json::to_string_pretty(&results).expect("results serialize");
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        println!("json: {}", path.display());
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let cfg = resolve(args.config.as_deref(), &args.overrides)?;
    cfg.validate()?;
    let dataset = cfg.load_dataset()?;
    let backend = cfg.build_backend()?;

    // Map keys to train indices, preserving order; unknown or repeated keys
    // are input errors.
    let train = dataset.train_issues();
    let mut genes = Vec::with_capacity(args.shots.len());
    for key in &args.shots {
        let key = key.trim();
        if key.is_empty() {
            continue;
        }
        let index = train
            .iter()
            .position(|i| i.key == key)
            .ok_or_else(|| CliError::Input(format!("key {key:?} is not in the train split")))?;
        if genes.contains(&index) {
            return Err(CliError::Input(format!("key {key:?} listed twice")));
        }
        genes.push(index);
    }
    let chromosome = Chromosome::new(genes);

    let estimator = Estimator::new(backend, Cache::in_memory(), cfg.estimator_options());
    let member = evaluate_one(&chromosome, &dataset, &estimator, &cfg)?;

    println!(
        "SAE {:.4}  MAE {:.4}  CI {:.4}  N {}",
        member.objectives.sae,
        member.mae(),
        member.objectives.ci,
        member.objectives.n_shots
    );
    println!("{:<12} {:>8}  {:>10}  {:>8}", "issue", "actual", "estimate", "fallback");
    for e in &member.estimates {
        println!(
            "{:<12} {:>8}  {:>10}  {:>8}",
            e.key,
            e.actual,
            e.estimate,
            if e.fallback { "yes" } else { "" }
        );
    }
    Ok(())
}

fn evaluate_one(
    chromosome: &Chromosome,
    dataset: &Dataset,
    estimator: &Estimator,
    cfg: &CliConfig,
) -> Result<EvaluatedIndividual, CliError> {
    evaluate_individual(chromosome, dataset, estimator, &cfg.ci(), cfg.parallelism, 0)
        .map_err(CliError::from)
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let view = load_pareto(&args.run_dir)?;

    let baselines = match &args.dataset {
        Some(path) => {
            let cfg = CliConfig {
                dataset: Some(path.clone()),
                split: args.split.clone(),
                project: args.project.clone(),
                ..CliConfig::default()
            };
            let dataset = cfg.load_dataset()?;
            Some(compute_baselines(&dataset, None, cfg.seed)?)
        }
        None => None,
    };
    let fixture = match &args.comparison {
        Some(path) => Some(load_comparison(path)?),
        None => None,
    };

    let text = render_comparison(&view, baselines.as_deref(), fixture.as_ref())?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            println!("report: {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_cache_stats(run_dir: &Path) -> Result<(), CliError> {
    let path = run_dir.join(CACHE_FILE);
    if !path.exists() {
        return Err(CliError::Input(format!("no cache at {}", path.display())));
    }
    let entries =
        read_entries(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut digests = std::collections::HashSet::new();
    let mut models = std::collections::BTreeSet::new();
    let mut fallbacks = 0u64;
    for e in &entries {
        digests.insert(e.digest.clone());
        models.insert(e.model.clone());
        if e.fallback {
            fallbacks += 1;
        }
    }
    println!("cache: {}", path.display());
    println!("entries:          {}", entries.len());
    println!("distinct prompts: {}", digests.len());
    println!("fallbacks:        {fallbacks}");
    println!(
        "models:           {}",
        models.into_iter().collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

fn cmd_cache_purge(run_dir: &Path) -> Result<(), CliError> {
    if !run_dir.exists() {
        return Err(CliError::Input(format!(
            "run directory {} does not exist",
            run_dir.display()
        )));
    }
    let path = run_dir.join(CACHE_FILE);
    if path.exists() {
        std::fs::remove_file(&path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        println!("purged {}", path.display());
    } else {
        println!("nothing to purge at {}", path.display());
    }
    Ok(())
}
