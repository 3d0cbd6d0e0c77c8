//! Fitness orchestration and run lifecycle.
//!
//! [`evaluate_individual`] maps one chromosome to its objective triple: the
//! gene-indexed training issues become prompt shots, every effective test
//! issue is estimated (concurrently, up to a parallelism bound), and the
//! objectives are computed after a deterministic barrier so concurrency
//! never changes results.
//!
//! [`run_optimization`] wires that evaluator into the generational engine
//! and owns the run directory: the response cache, an atomically written
//! checkpoint after initialization and after every generation, and — on
//! completion — the artifacts (`pareto.json`, `front_points.csv`,
//! `history.csv`, `report.md`). A run interrupted at any generation
//! boundary resumes from its checkpoint and finishes with byte-identical
//! `pareto.json`, because the engine re-derives generator state from (seed,
//! generation index) alone and the checkpoint stores evaluated populations
//! whole. `pareto.json` deliberately carries no volatile counters (timings,
//! call counts), so repeated and resumed runs of the same config compare
//! equal bitwise.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Chromosome, Dataset, DomainError};
use crate::estimator::{EstimateError, Estimator, EstimatorBackend, EstimatorOptions, Shot};
use crate::evolve::{
    init_population, non_dominated_sort, Engine, EvolutionConfig, EvolveError, ObjectiveVector,
};
use crate::stats::{self, CiConfig, ErrorSample, StatsError};

pub const STATE_FILE: &str = "state.ckpt";
pub const CACHE_FILE: &str = "cache.jsonl";
pub const PARETO_FILE: &str = "pareto.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const FRONT_POINTS_FILE: &str = "front_points.csv";
pub const REPORT_FILE: &str = "report.md";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Cache(#[from] crate::estimator::CacheError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv artifact: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("checkpoint incompatible with the requested run: {0}")]
    IncompatibleCheckpoint(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One test issue's outcome inside an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueEstimate {
    pub key: String,
    pub actual: f64,
    pub estimate: f64,
    pub fallback: bool,
}

/// A chromosome with its objectives and the per-issue estimates they were
/// computed from; `generation` is the generation that first evaluated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedIndividual {
    pub chromosome: Chromosome,
    pub objectives: ObjectiveVector,
    pub estimates: Vec<IssueEstimate>,
    pub generation: usize,
}

impl EvaluatedIndividual {
    /// MAE over the stored per-issue estimates.
    pub fn mae(&self) -> f64 {
        self.objectives.sae / self.estimates.len() as f64
    }
}

/// Everything a run needs beyond the dataset and backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub evolution: EvolutionConfig,
    pub ci: CiConfig,
    pub options: EstimatorOptions,
    /// Concurrent estimate calls per individual evaluation.
    pub parallelism: usize,
    /// Also maintain the global non-dominated archive over every individual
    /// evaluated, not just the final population.
    pub archive: bool,
    /// Stop (with a checkpoint, without artifacts) once this absolute
    /// generation index is reached; used to exercise interruption.
    pub stop_after: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            evolution: EvolutionConfig::default(),
            ci: CiConfig::default(),
            options: EstimatorOptions::default(),
            parallelism: 4,
            archive: false,
            stop_after: None,
        }
    }
}

/// Per-generation convergence summary, one `history.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_sae: f64,
    pub median_sae: f64,
    pub best_ci: f64,
    pub median_ci: f64,
    pub best_n_shots: usize,
    pub median_n_shots: f64,
    /// Fallback-flagged estimates across the generation's population.
    pub fallback_estimates: u64,
}

/// The serialized checkpoint: enough to continue a run exactly, with no
/// generator state beyond (seed, generation index).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunState {
    pub config: RunConfig,
    pub project: String,
    pub next_generation: usize,
    pub population: Vec<EvaluatedIndividual>,
    pub zero_shot: EvaluatedIndividual,
    pub history: Vec<GenerationStats>,
    #[serde(default)]
    pub archive: Vec<EvaluatedIndividual>,
}

/// What a finished (or interrupted) run hands back to the caller.
#[derive(Debug)]
pub struct RunOutcome {
    /// Canonically sorted non-dominated set of the final population,
    /// deduplicated by chromosome.
    pub front: Vec<EvaluatedIndividual>,
    pub zero_shot: EvaluatedIndividual,
    pub history: Vec<GenerationStats>,
    pub archive: Vec<EvaluatedIndividual>,
    /// Backend invocations made by this process (cache hits excluded).
    pub backend_calls: u64,
    /// Per-issue estimates issued by this process, and how many of them
    /// were fallbacks.
    pub estimates_issued: u64,
    pub fallback_estimates: u64,
    /// False when `stop_after` interrupted the run before the last
    /// generation; artifacts are only written when true.
    pub completed: bool,
    pub run_dir: PathBuf,
}

/// The `pareto.json` document. Deliberately free of timings and counters:
/// two runs of the same config must serialize to identical bytes.
#[derive(Debug, Serialize, Deserialize)]
struct ParetoDoc {
    project: String,
    seed: u64,
    zero_shot: EvaluatedIndividual,
    front: Vec<EvaluatedIndividual>,
    #[serde(skip_serializing_if = "Option::is_none")]
    archive: Option<Vec<EvaluatedIndividual>>,
}

/// Evaluates one chromosome: estimates every effective test issue (with up
/// to `parallelism` concurrent backend calls) and reduces to the objective
/// triple. Slot assignment is by issue index, so results and error choice
/// are independent of thread scheduling.
pub fn evaluate_individual(
    chromosome: &Chromosome,
    dataset: &Dataset,
    estimator: &Estimator,
    ci: &CiConfig,
    parallelism: usize,
    generation: usize,
) -> Result<EvaluatedIndividual, PipelineError> {
    let train = dataset.train_issues();
    chromosome.validate(train.len())?;
    let test_issues = dataset.effective_test_set()?;
    let allowed = dataset.allowed_values()?;

    let shots: Vec<Shot> = chromosome
        .genes
        .iter()
        .map(|&g| Shot::from_issue(train[g]))
        .collect();
    let requests: Vec<crate::estimator::EstimateRequest> = test_issues
        .iter()
        .map(|issue| crate::estimator::EstimateRequest {
            shots: shots.clone(),
            target_text: issue.text(),
            allowed: allowed.clone(),
        })
        .collect();

    let workers = parallelism.clamp(1, requests.len());
    let mut slots: Vec<Option<Result<crate::estimator::Estimate, EstimateError>>> =
        (0..requests.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            let requests = &requests;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut i = w;
                while i < requests.len() {
                    out.push((i, estimator.estimate(&requests[i])));
                    i += workers;
                }
                out
            }));
        }
        for handle in handles {
            for (i, result) in handle.join().expect("estimate worker panicked") {
                slots[i] = Some(result);
            }
        }
    });

    let mut estimates = Vec::with_capacity(test_issues.len());
    for (issue, slot) in test_issues.iter().zip(slots.into_iter()) {
        let estimate = slot.expect("every slot filled")?;
        estimates.push(IssueEstimate {
            key: issue.key.clone(),
            actual: issue.story_points,
            estimate: estimate.value,
            fallback: estimate.fallback,
        });
    }

    let abs_errors: Vec<f64> = estimates
        .iter()
        .map(|e| (e.actual - e.estimate).abs())
        .collect();
    let sae: f64 = abs_errors.iter().sum();
    let sample = ErrorSample::new(abs_errors)?;
    let ci_width = stats::confidence_interval(&sample, ci)?;

    Ok(EvaluatedIndividual {
        chromosome: chromosome.clone(),
        objectives: ObjectiveVector::new(sae, ci_width, chromosome.len()),
        estimates,
        generation,
    })
}

/// Mean percentage improvement over paired per-project MAEs:
/// `mean(100 * (zero - best) / zero)`.
pub fn improvement_report(zero_shot_mae: &[f64], best_mae: &[f64]) -> Result<f64, PipelineError> {
    if zero_shot_mae.is_empty() || zero_shot_mae.len() != best_mae.len() {
        return Err(PipelineError::InvalidInput(format!(
            "need equal-length non-empty MAE lists, got {} and {}",
            zero_shot_mae.len(),
            best_mae.len()
        )));
    }
    let mut total = 0.0;
    for (&zero, &best) in zero_shot_mae.iter().zip(best_mae.iter()) {
        if zero <= 0.0 {
            return Err(PipelineError::InvalidInput(format!(
                "zero-shot MAE must be positive to express improvement, got {zero}"
            )));
        }
        total += 100.0 * (zero - best) / zero;
    }
    Ok(total / zero_shot_mae.len() as f64)
}

/// The front members worth naming: minimizers of each objective. Ties go to
/// fewer shots, then lower SAE, then lower CI, then genes.
#[derive(Debug, Clone, Copy)]
pub struct Representatives<'a> {
    /// Present only when the front has a zero-length member.
    pub zero_shot: Option<&'a EvaluatedIndividual>,
    pub best_sae: &'a EvaluatedIndividual,
    pub best_ci: &'a EvaluatedIndividual,
    pub min_n: &'a EvaluatedIndividual,
}

pub fn select_representatives(front: &[EvaluatedIndividual]) -> Option<Representatives<'_>> {
    if front.is_empty() {
        return None;
    }
    let by = |primary: fn(&EvaluatedIndividual) -> f64| {
        front
            .iter()
            .min_by(|a, b| {
                primary(a)
                    .total_cmp(&primary(b))
                    .then(a.objectives.n_shots.cmp(&b.objectives.n_shots))
                    .then(a.objectives.sae.total_cmp(&b.objectives.sae))
                    .then(a.objectives.ci.total_cmp(&b.objectives.ci))
                    .then(a.chromosome.genes.cmp(&b.chromosome.genes))
            })
            .expect("front is non-empty")
    };
    Some(Representatives {
        zero_shot: front.iter().find(|m| m.chromosome.is_empty()),
        best_sae: by(|m| m.objectives.sae),
        best_ci: by(|m| m.objectives.ci),
        min_n: by(|m| m.objectives.n_shots as f64),
    })
}

fn median_f64(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

fn generation_stats(generation: usize, population: &[EvaluatedIndividual]) -> GenerationStats {
    let mut saes: Vec<f64> = population.iter().map(|m| m.objectives.sae).collect();
    let mut cis: Vec<f64> = population.iter().map(|m| m.objectives.ci).collect();
    let mut ns: Vec<f64> = population
        .iter()
        .map(|m| m.objectives.n_shots as f64)
        .collect();
    GenerationStats {
        generation,
        best_sae: saes.iter().copied().fold(f64::INFINITY, f64::min),
        best_ci: cis.iter().copied().fold(f64::INFINITY, f64::min),
        best_n_shots: population
            .iter()
            .map(|m| m.objectives.n_shots)
            .min()
            .unwrap_or(0),
        median_sae: median_f64(&mut saes),
        median_ci: median_f64(&mut cis),
        median_n_shots: median_f64(&mut ns),
        fallback_estimates: population
            .iter()
            .flat_map(|m| &m.estimates)
            .filter(|e| e.fallback)
            .count() as u64,
    }
}

/// Canonical artifact order: by objectives, then genes.
fn canonical_sort(front: &mut [EvaluatedIndividual]) {
    front.sort_by(|a, b| {
        a.objectives
            .sae
            .total_cmp(&b.objectives.sae)
            .then(a.objectives.ci.total_cmp(&b.objectives.ci))
            .then(a.objectives.n_shots.cmp(&b.objectives.n_shots))
            .then(a.chromosome.genes.cmp(&b.chromosome.genes))
    });
}

/// Non-dominated members of `candidates`, deduplicated by chromosome
/// (first occurrence wins), canonically sorted.
fn non_dominated_unique(candidates: &[EvaluatedIndividual]) -> Vec<EvaluatedIndividual> {
    let mut unique: Vec<EvaluatedIndividual> = Vec::with_capacity(candidates.len());
    let mut seen: HashMap<&Chromosome, ()> = HashMap::with_capacity(candidates.len());
    for member in candidates {
        if seen.insert(&member.chromosome, ()).is_none() {
            unique.push(member.clone());
        }
    }
    let objectives: Vec<ObjectiveVector> = unique.iter().map(|m| m.objectives).collect();
    let fronts = non_dominated_sort(&objectives);
    let mut front: Vec<EvaluatedIndividual> = fronts
        .first()
        .map(|f| f.iter().map(|&i| unique[i].clone()).collect())
        .unwrap_or_default();
    canonical_sort(&mut front);
    front
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// The config facets that determine results; a checkpoint from a different
/// value of any of these cannot be resumed.
fn ensure_compatible(stored: &RunConfig, requested: &RunConfig) -> Result<(), PipelineError> {
    if stored.evolution != requested.evolution {
        return Err(PipelineError::IncompatibleCheckpoint(
            "evolution settings differ from the checkpointed run".to_owned(),
        ));
    }
    if stored.ci != requested.ci {
        return Err(PipelineError::IncompatibleCheckpoint(
            "confidence-interval settings differ from the checkpointed run".to_owned(),
        ));
    }
    if stored.options.snap_to_allowed != requested.options.snap_to_allowed
        || stored.options.fallback_enabled != requested.options.fallback_enabled
    {
        return Err(PipelineError::IncompatibleCheckpoint(
            "estimation semantics differ from the checkpointed run".to_owned(),
        ));
    }
    if stored.archive != requested.archive {
        return Err(PipelineError::IncompatibleCheckpoint(
            "archive setting differs from the checkpointed run".to_owned(),
        ));
    }
    Ok(())
}

struct Counters {
    estimates_issued: u64,
    fallback_estimates: u64,
}

/// Runs (or resumes) the full optimization in `run_dir`.
///
/// A fresh directory gets the initial population (plus the always-evaluated
/// zero-shot reference) and a checkpoint; an existing checkpoint is loaded
/// and continued. Completion writes the artifacts; reaching `stop_after`
/// first returns `completed: false` with the checkpoint in place.
pub fn run_optimization(
    dataset: &Dataset,
    backend: Box<dyn EstimatorBackend>,
    config: RunConfig,
    run_dir: &Path,
) -> Result<RunOutcome, PipelineError> {
    config.evolution.validate()?;
    config.ci.validate()?;
    dataset.validate()?;
    fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;

    let cache = crate::estimator::Cache::open(&run_dir.join(CACHE_FILE))?;
    let estimator = Estimator::new(backend, cache, config.options.clone());
    let train_size = dataset.train_issues().len();
    let mut counters = Counters {
        estimates_issued: 0,
        fallback_estimates: 0,
    };

    let evaluate = |chromosome: &Chromosome,
                        generation: usize,
                        counters: &mut Counters|
     -> Result<EvaluatedIndividual, PipelineError> {
        let individual = evaluate_individual(
            chromosome,
            dataset,
            &estimator,
            &config.ci,
            config.parallelism,
            generation,
        )?;
        counters.estimates_issued += individual.estimates.len() as u64;
        counters.fallback_estimates +=
            individual.estimates.iter().filter(|e| e.fallback).count() as u64;
        Ok(individual)
    };

    // A record per distinct chromosome, overwritten on re-evaluation; the
    // checkpointed population rehydrates it on resume.
    let mut records: HashMap<Chromosome, EvaluatedIndividual> = HashMap::new();

    let state_path = run_dir.join(STATE_FILE);
    let (mut engine, zero_shot, mut history, mut archive) = if state_path.exists() {
        let state: RunState = read_json(&state_path)?;
        ensure_compatible(&state.config, &config)?;
        if state.project != dataset.project {
            return Err(PipelineError::IncompatibleCheckpoint(format!(
                "checkpoint belongs to project {:?}, dataset is {:?}",
                state.project, dataset.project
            )));
        }
        let pairs: Vec<(Chromosome, ObjectiveVector)> = state
            .population
            .iter()
            .map(|m| (m.chromosome.clone(), m.objectives))
            .collect();
        for member in state.population {
            records.insert(member.chromosome.clone(), member);
        }
        let engine = Engine::new(
            config.evolution.clone(),
            train_size,
            pairs,
            state.next_generation,
        )?;
        (engine, state.zero_shot, state.history, state.archive)
    } else {
        // The zero-shot reference is evaluated up front, whether or not the
        // population ever contains the empty chromosome.
        let zero_shot = evaluate(&Chromosome::empty(), 0, &mut counters)?;
        let initial = init_population(&config.evolution, train_size)?;
        let mut pairs = Vec::with_capacity(initial.len());
        for chromosome in initial {
            let member = evaluate(&chromosome, 0, &mut counters)?;
            pairs.push((chromosome.clone(), member.objectives));
            records.insert(chromosome, member);
        }
        let engine = Engine::new(config.evolution.clone(), train_size, pairs, 0)?;
        let population = population_records(&engine, &records);
        let archive = if config.archive {
            non_dominated_unique(&population)
        } else {
            Vec::new()
        };
        let history = vec![generation_stats(0, &population)];
        let state = RunState {
            config: config.clone(),
            project: dataset.project.clone(),
            next_generation: 0,
            population,
            zero_shot: zero_shot.clone(),
            history: history.clone(),
            archive: archive.clone(),
        };
        write_json_atomic(&state_path, &state)?;
        (engine, zero_shot, history, archive)
    };

    while !engine.is_complete() {
        if let Some(stop) = config.stop_after {
            if engine.next_generation() >= stop {
                break;
            }
        }
        let offspring_generation = engine.next_generation() + 1;
        let mut fresh: Vec<EvaluatedIndividual> = Vec::new();
        {
            let records = &mut records;
            let counters = &mut counters;
            let fresh = &mut fresh;
            let mut eval_offspring = |chromosome: &Chromosome| -> Result<ObjectiveVector, PipelineError> {
                let member = evaluate(chromosome, offspring_generation, counters)?;
                let objectives = member.objectives;
                fresh.push(member.clone());
                records.insert(chromosome.clone(), member);
                Ok(objectives)
            };
            engine.step(&mut eval_offspring)?;
        }
        let population = population_records(&engine, &records);
        if config.archive {
            let mut candidates = archive;
            candidates.extend(fresh);
            archive = non_dominated_unique(&candidates);
        }
        history.push(generation_stats(engine.next_generation(), &population));
        let state = RunState {
            config: config.clone(),
            project: dataset.project.clone(),
            next_generation: engine.next_generation(),
            population,
            zero_shot: zero_shot.clone(),
            history: history.clone(),
            archive: archive.clone(),
        };
        write_json_atomic(&state_path, &state)?;
    }

    let population = population_records(&engine, &records);
    let front = non_dominated_unique(&population);
    let completed = engine.is_complete();
    let outcome = RunOutcome {
        front,
        zero_shot,
        history,
        archive,
        backend_calls: estimator.backend_calls(),
        estimates_issued: counters.estimates_issued,
        fallback_estimates: counters.fallback_estimates,
        completed,
        run_dir: run_dir.to_path_buf(),
    };
    if completed {
        write_artifacts(dataset, &config, &outcome)?;
    }
    Ok(outcome)
}

/// The engine's population rehydrated into full evaluation records, in
/// engine order.
fn population_records(
    engine: &Engine,
    records: &HashMap<Chromosome, EvaluatedIndividual>,
) -> Vec<EvaluatedIndividual> {
    engine
        .population()
        .iter()
        .map(|m| {
            records
                .get(&m.chromosome)
                .expect("every population member has a record")
                .clone()
        })
        .collect()
}

fn write_artifacts(
    dataset: &Dataset,
    config: &RunConfig,
    outcome: &RunOutcome,
) -> Result<(), PipelineError> {
    let run_dir = &outcome.run_dir;
    let doc = ParetoDoc {
        project: dataset.project.clone(),
        seed: config.evolution.rng_seed,
        zero_shot: outcome.zero_shot.clone(),
        front: outcome.front.clone(),
        archive: config.archive.then(|| outcome.archive.clone()),
    };
    write_json_atomic(&run_dir.join(PARETO_FILE), &doc)?;

    let mut points = csv::Writer::from_path(run_dir.join(FRONT_POINTS_FILE))?;
    points.write_record(["sae", "ci", "n_shots", "chromosome"])?;
    for member in &outcome.front {
        points.write_record([
            member.objectives.sae.to_string(),
            member.objectives.ci.to_string(),
            member.objectives.n_shots.to_string(),
            genes_label(&member.chromosome),
        ])?;
    }
    points.flush().map_err(io_err(run_dir))?;

    let mut hist = csv::Writer::from_path(run_dir.join(HISTORY_FILE))?;
    hist.write_record([
        "generation",
        "best_sae",
        "median_sae",
        "best_ci",
        "median_ci",
        "best_n_shots",
        "median_n_shots",
        "fallback_estimates",
    ])?;
    for row in &outcome.history {
        hist.write_record([
            row.generation.to_string(),
            row.best_sae.to_string(),
            row.median_sae.to_string(),
            row.best_ci.to_string(),
            row.median_ci.to_string(),
            row.best_n_shots.to_string(),
            row.median_n_shots.to_string(),
            row.fallback_estimates.to_string(),
        ])?;
    }
    hist.flush().map_err(io_err(run_dir))?;

    let report = render_run_report(&dataset.project, outcome);
    fs::write(run_dir.join(REPORT_FILE), report).map_err(io_err(&run_dir.join(REPORT_FILE)))?;
    Ok(())
}

/// Semicolon-joined gene list, e.g. `1;5;9`; empty for zero-shot.
pub fn genes_label(chromosome: &Chromosome) -> String {
    chromosome
        .genes
        .iter()
        .map(|g| g.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// The per-run summary written as `report.md`.
pub fn render_run_report(project: &str, outcome: &RunOutcome) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Optimization report — {project}\n\n"));
    let zero = &outcome.zero_shot;
    out.push_str(&format!(
        "Zero-shot reference: MAE {:.4} (SAE {:.4}, CI {:.4}) over {} test issues.\n\n",
        zero.mae(),
        zero.objectives.sae,
        zero.objectives.ci,
        zero.estimates.len()
    ));

    out.push_str("## Pareto front representatives\n\n");
    out.push_str("| role | SAE | MAE | CI | shots | chromosome |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    if let Some(reps) = select_representatives(&outcome.front) {
        let mut row = |role: &str, m: &EvaluatedIndividual| {
            out.push_str(&format!(
                "| {role} | {:.4} | {:.4} | {:.4} | {} | {} |\n",
                m.objectives.sae,
                m.mae(),
                m.objectives.ci,
                m.objectives.n_shots,
                genes_label(&m.chromosome)
            ));
        };
        if let Some(zs) = reps.zero_shot {
            row("zero-shot (in front)", zs);
        }
        row("best SAE", reps.best_sae);
        row("best CI", reps.best_ci);
        row("fewest shots", reps.min_n);
        let best_mae = reps.best_sae.mae();
        let zero_mae = zero.mae();
        if zero_mae > 0.0 {
            out.push_str(&format!(
                "\nBest-SAE member improves MAE over zero-shot by {:.2}% ({:.4} → {:.4}).\n",
                100.0 * (zero_mae - best_mae) / zero_mae,
                zero_mae,
                best_mae
            ));
        }
    } else {
        out.push_str("| (empty front) | | | | | |\n");
    }

    out.push_str(&format!(
        "\nFront size: {}. Generations recorded: {}.\n",
        outcome.front.len(),
        outcome.history.len().saturating_sub(1)
    ));

    out.push_str("\n## Estimation health\n\n");
    let fallback_pct = if outcome.estimates_issued > 0 {
        100.0 * outcome.fallback_estimates as f64 / outcome.estimates_issued as f64
    } else {
        0.0
    };
    out.push_str(&format!(
        "- Backend calls this process: {}\n- Estimates issued: {} ({} fallbacks, {:.2}%)\n",
        outcome.backend_calls, outcome.estimates_issued, outcome.fallback_estimates, fallback_pct
    ));
    if fallback_pct > 10.0 {
        out.push_str("- **WARN**: more than 10% of estimates fell back to the median; objective values are degraded.\n");
    }
    out
}
