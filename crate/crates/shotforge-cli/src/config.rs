//! Flat run configuration: one diffable file, every knob a top-level key,
//! command-line flags winning over file values.
//!
//! The resolved configuration is snapshotted verbatim into the run
//! directory as `config.snapshot.json`, and the run's identity is a hash of
//! that snapshot (minus keys that cannot change results: output location,
//! interruption point, worker count). Re-running the same snapshot lands in
//! the same directory and reproduces the same artifacts.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use shotforge::domain::{load_dataset, Dataset, DatasetFormat};
use shotforge::estimator::{
    llm_backend, EstimatorBackend, EstimatorConfig, EstimatorOptions, ReplayBackend,
    SimilarityBackend,
};
use shotforge::evolve::{EvolutionConfig, MutationScheme};
use shotforge::pipeline::RunConfig;
use shotforge::stats::CiConfig;

use crate::CliError;

/// Which estimator backend a run talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible chat-completions endpoint (needs `SHOTFORGE_API_KEY`).
    Llm,
    /// Deterministic in-process mock: nearest shot by word overlap.
    MockSimilarity,
    /// Recorded responses from a cache file; no network.
    Replay,
}

/// Every knob of a run, flat. Unset keys take the documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Issues file: `.json` (self-contained) or `.csv` (needs `split` and
    /// `project`).
    pub dataset: Option<PathBuf>,
    /// Split JSON for CSV datasets: `{"train": [...], "test": [...]}`.
    pub split: Option<PathBuf>,
    /// Project name for CSV datasets (JSON datasets carry their own).
    pub project: Option<String>,
    pub backend: BackendKind,
    /// Cache file with recorded responses, for `backend = "replay"`.
    pub replay_fixture: Option<PathBuf>,
    /// Parent directory for run directories.
    pub output_dir: PathBuf,
    pub seed: u64,
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub max_init_len: usize,
    pub seed_zero_shot: bool,
    pub mutation_scheme: MutationScheme,
    pub ci_p: f64,
    pub ci_k: usize,
    /// Evaluate only the first N test issues.
    pub test_truncation: Option<usize>,
    pub parallelism: usize,
    /// Keep the global non-dominated archive over every evaluation.
    pub archive: bool,
    pub snap_to_allowed: bool,
    pub fallback_enabled: bool,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub requests_per_minute: u32,
    /// Checkpoint and stop once this generation index is reached.
    pub stop_after: Option<usize>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let evolution = EvolutionConfig::default();
        let ci = CiConfig::default();
        let options = EstimatorOptions::default();
        let estimator = EstimatorConfig::default();
        CliConfig {
            dataset: None,
            split: None,
            project: None,
            backend: BackendKind::MockSimilarity,
            replay_fixture: None,
            output_dir: PathBuf::from("runs"),
            seed: evolution.rng_seed,
            population_size: evolution.population_size,
            generations: evolution.generations,
            crossover_rate: evolution.crossover_rate,
            mutation_rate: evolution.mutation_rate,
            max_init_len: evolution.max_init_len,
            seed_zero_shot: evolution.seed_zero_shot,
            mutation_scheme: evolution.mutation_scheme,
            ci_p: ci.p,
            ci_k: ci.k,
            test_truncation: None,
            parallelism: 4,
            archive: false,
            snap_to_allowed: options.snap_to_allowed,
            fallback_enabled: options.fallback_enabled,
            max_retries: options.max_retries,
            retry_backoff_ms: options.retry_backoff.as_millis() as u64,
            endpoint_url: estimator.endpoint_url,
            model_name: estimator.model_name,
            temperature: estimator.temperature,
            timeout_secs: estimator.timeout.as_secs(),
            requests_per_minute: estimator.requests_per_minute,
            stop_after: None,
        }
    }
}

impl CliConfig {
    /// Loads a config file: TOML normally, JSON when the extension says so
    /// (run snapshots are JSON and can be fed straight back in).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("invalid JSON config {}: {e}", path.display())))
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Input(format!("invalid TOML config {}: {e}", path.display())))
        }
    }

    /// The run's identity: a hash over the result-determining keys. Output
    /// location, interruption point, and worker count are excluded — they
    /// cannot change what the run computes.
    pub fn run_id(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.stop_after = None;
        canonical.parallelism = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)[..12].to_owned()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.run_id())
    }

    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig {
            population_size: self.population_size,
            generations: self.generations,
            crossover_rate: self.crossover_rate,
            mutation_rate: self.mutation_rate,
            max_init_len: self.max_init_len,
            rng_seed: self.seed,
            seed_zero_shot: self.seed_zero_shot,
            mutation_scheme: self.mutation_scheme,
        }
    }

    pub fn ci(&self) -> CiConfig {
        CiConfig {
            p: self.ci_p,
            k: self.ci_k,
        }
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            max_retries: self.max_retries,
            retry_backoff: Duration::from_millis(self.retry_backoff_ms),
            fallback_enabled: self.fallback_enabled,
            snap_to_allowed: self.snap_to_allowed,
        }
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            endpoint_url: self.endpoint_url.clone(),
            model_name: self.model_name.clone(),
            temperature: self.temperature,
            max_retries: self.max_retries,
            timeout: Duration::from_secs(self.timeout_secs),
            requests_per_minute: self.requests_per_minute,
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            evolution: self.evolution(),
            ci: self.ci(),
            options: self.estimator_options(),
            parallelism: self.parallelism,
            archive: self.archive,
            stop_after: self.stop_after,
        }
    }

    /// Loads and validates the configured dataset.
    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        let path = self
            .dataset
            .as_ref()
            .ok_or_else(|| CliError::Input("missing required key: dataset".to_owned()))?;
        let is_csv = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
        let format = if is_csv {
            let split_path = self.split.clone().ok_or_else(|| {
                CliError::Input("CSV datasets need the `split` key (split JSON path)".to_owned())
            })?;
            let project = self.project.clone().ok_or_else(|| {
                CliError::Input("CSV datasets need the `project` key".to_owned())
            })?;
            DatasetFormat::Csv {
                split_path,
                project,
            }
        } else {
            DatasetFormat::Json
        };
        let dataset = load_dataset(path, &format)
            .map_err(|e| CliError::Input(format!("dataset {}: {e}", path.display())))?
            .with_truncation(self.test_truncation);
        dataset
            .validate()
            .map_err(|e| CliError::Input(format!("dataset {}: {e}", path.display())))?;
        Ok(dataset)
    }

    /// Builds the configured backend. LLM construction reads the API key
    /// and fails fast — before any run state is touched.
    pub fn build_backend(&self) -> Result<Box<dyn EstimatorBackend>, CliError> {
        match self.backend {
            BackendKind::Llm => {
                let backend = llm_backend(self.estimator_config())
                    .map_err(|e| CliError::Backend(e.to_string()))?;
                Ok(Box::new(backend))
            }
            BackendKind::MockSimilarity => Ok(Box::new(SimilarityBackend::new())),
            BackendKind::Replay => {
                let fixture = self.replay_fixture.as_ref().ok_or_else(|| {
                    CliError::Input(
                        "backend = \"replay\" needs the `replay_fixture` key".to_owned(),
                    )
                })?;
                let backend = ReplayBackend::from_cache_file(fixture)
                    .map_err(|e| CliError::Input(format!("replay fixture: {e}")))?;
                Ok(Box::new(backend))
            }
        }
    }

    /// Full validation of everything the run will use, before any work.
    pub fn validate(&self) -> Result<(), CliError> {
        self.evolution()
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        self.ci()
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        if self.backend == BackendKind::Llm {
            self.estimator_config()
                .validate()
                .map_err(|e| CliError::Input(e.to_string()))?;
        }
        if self.parallelism == 0 {
            return Err(CliError::Input("parallelism must be at least 1".to_owned()));
        }
        Ok(())
    }
}
