//! Estimation backends: the real OpenAI-compatible HTTP client, a
//! deterministic similarity mock for offline runs, and a replay backend
//! that serves recorded responses byte-for-byte.
//!
//! Backends perform exactly one attempt per [`EstimatorBackend::complete`]
//! call; retry policy lives one layer up in the estimator so every backend
//! gets the same treatment.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::{read_entries, CacheError};
use super::{format_points, prompt_digest, EstimateRequest};

/// Environment variable holding the API key for the HTTP backend.
pub const API_KEY_ENV: &str = "SHOTFORGE_API_KEY";

/// Failure modes of a single backend attempt.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("missing API key: set {env_var}")]
    Auth { env_var: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed completion payload: {0}")]
    Protocol(String),
    #[error("no recorded response for digest {digest}")]
    MissingFixture { digest: String },
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Whether another attempt could plausibly succeed: rate limiting and
    /// server errors, timeouts, and transport hiccups are retryable; auth,
    /// client errors, bad payloads, and missing fixtures are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            BackendError::Timeout(_) | BackendError::Transport(_) => true,
            BackendError::Auth { .. }
            | BackendError::Protocol(_)
            | BackendError::MissingFixture { .. }
            | BackendError::Config(_) => false,
        }
    }
}

/// A story-point estimation backend. One `complete` call is one attempt;
/// implementations must be stateless per call and safe to share across
/// threads.
pub trait EstimatorBackend: Send + Sync {
    /// Model identity; part of the cache key, so two backends producing
    /// different answers must report different names.
    fn name(&self) -> &str;

    /// Produces the raw completion text for an already-rendered prompt.
    /// `req` carries the structured request for backends (like mocks) that
    /// work from the shots directly.
    fn complete(&self, req: &EstimateRequest, prompt: &str) -> Result<String, BackendError>;
}

/// Connection settings for the HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Base URL; the chat-completions path is appended.
    pub endpoint_url: String,
    pub model_name: String,
    /// Sampling temperature; 0 keeps responses as deterministic as the
    /// service allows.
    pub temperature: f64,
    /// Extra attempts after the first (consumed by the estimator's retry
    /// loop, carried here so one config block describes the backend).
    pub max_retries: u32,
    pub timeout: Duration,
    pub requests_per_minute: u32,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            endpoint_url: "https://api.openai.com".to_owned(),
            model_name: "gpt-4".to_owned(),
            temperature: 0.0,
            max_retries: 2,
            timeout: Duration::from_secs(60),
            requests_per_minute: 60,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.endpoint_url.trim().is_empty() {
            return Err(BackendError::Config("endpoint_url is empty".to_owned()));
        }
        if self.model_name.trim().is_empty() {
            return Err(BackendError::Config("model_name is empty".to_owned()));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.requests_per_minute == 0 {
            return Err(BackendError::Config(
                "requests_per_minute must be positive".to_owned(),
            ));
        }
        Ok(())
    }
}

/// Global request pacer: enforces a minimum spacing of `60s / rpm` between
/// request starts across all threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    earliest_next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: u32) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(60.0 / f64::from(requests_per_minute.max(1))),
            earliest_next: Mutex::new(None),
        }
    }

    /// Scheduling core, separated from the clock for testability: books the
    /// next slot and returns how long a caller arriving at `now` must wait
    /// for it.
    pub fn delay_for(&self, now: Instant) -> Duration {
        let mut earliest = self.earliest_next.lock().expect("limiter lock not poisoned");
        let start = match *earliest {
            Some(e) if e > now => e,
            _ => now,
        };
        *earliest = Some(start + self.interval);
        start.duration_since(now)
    }

    /// Blocks until the next slot.
    pub fn acquire(&self) {
        let delay = self.delay_for(Instant::now());
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
    }
}

/// OpenAI-compatible chat-completions client.
pub struct LlmBackend {
    cfg: EstimatorConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
}

impl std::fmt::Debug for LlmBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmBackend")
            .field("cfg", &self.cfg)
            .field("api_key", &"<redacted>")
            .field("limiter", &self.limiter)
            .finish_non_exhaustive()
    }
}

/// Builds the HTTP backend. Reads the API key from [`API_KEY_ENV`] once, at
/// construction — a missing key fails here, before any network traffic.
pub fn llm_backend(cfg: EstimatorConfig) -> Result<LlmBackend, BackendError> {
    cfg.validate()?;
    let api_key = std::env::var(API_KEY_ENV).map_err(|_| BackendError::Auth {
        env_var: API_KEY_ENV.to_owned(),
    })?;
    if api_key.trim().is_empty() {
        return Err(BackendError::Auth {
            env_var: API_KEY_ENV.to_owned(),
        });
    }
    let client = reqwest::blocking::Client::builder()
        .timeout(cfg.timeout)
        .build()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    Ok(LlmBackend {
        limiter: RateLimiter::new(cfg.requests_per_minute),
        cfg,
        api_key,
        client,
    })
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

impl LlmBackend {
    fn completions_url(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.cfg.endpoint_url.trim_end_matches('/')
        )
    }
}

impl EstimatorBackend for LlmBackend {
    fn name(&self) -> &str {
        &self.cfg.model_name
    }

    fn complete(&self, _req: &EstimateRequest, prompt: &str) -> Result<String, BackendError> {
        self.limiter.acquire();
        let body = ChatRequest {
            model: &self.cfg.model_name,
            temperature: self.cfg.temperature,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let response = self
            .client
            .post(self.completions_url())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout(self.cfg.timeout)
                } else {
                    BackendError::Transport(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(self.cfg.timeout)
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        if !(200..300).contains(&status) {
            let mut body = text;
            body.truncate(500);
            return Err(BackendError::Http { status, body });
        }
        let payload: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Protocol(format!("response is not JSON: {e}")))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| {
                BackendError::Protocol("choices[0].message.content missing".to_owned())
            })
    }
}

fn word_set(text: &str) -> HashSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0; // two empty sets are identical
    }
    let intersection = a.intersection(b).count();
    intersection as f64 / union as f64
}

/// Deterministic offline oracle: answers with the story points of the shot
/// whose lowercase word set is most similar (Jaccard) to the target's, the
/// earliest shot winning ties; with no shots it answers the median allowed
/// value. Responses are phrased as `<value> Story Points` so the full
/// parsing path is exercised.
#[derive(Debug, Default, Clone, Copy)]
pub struct SimilarityBackend;

impl SimilarityBackend {
    pub fn new() -> Self {
        SimilarityBackend
    }
}

impl EstimatorBackend for SimilarityBackend {
    fn name(&self) -> &str {
        "similarity-mock"
    }

    fn complete(&self, req: &EstimateRequest, _prompt: &str) -> Result<String, BackendError> {
        let value = if req.shots.is_empty() {
            req.allowed.median()
        } else {
            let target = word_set(&req.target_text);
            let mut best_score = -1.0;
            let mut best_points = req.shots[0].story_points;
            for shot in &req.shots {
                let score = jaccard(&word_set(&shot.text), &target);
                if score > best_score {
                    best_score = score;
                    best_points = shot.story_points;
                }
            }
            best_points
        };
        Ok(format!("{} Story Points", format_points(value)))
    }
}

/// Serves recorded responses keyed by prompt digest; unknown digests fail
/// with [`BackendError::MissingFixture`]. Lets a whole optimization run
/// replay bit-for-bit without a network.
pub struct ReplayBackend {
    name: String,
    responses: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn new(name: impl Into<String>, responses: HashMap<String, String>) -> Self {
        ReplayBackend {
            name: name.into(),
            responses,
        }
    }

    /// Loads a fixture from a cache file, adopting the first record's model
    /// name so replayed digests match the ones the recording run computed.
    /// Duplicate digests resolve to the last record, like the cache itself.
    pub fn from_cache_file(path: &Path) -> Result<Self, CacheError> {
        let entries = read_entries(path)?;
        let name = entries
            .first()
            .map(|e| e.model.clone())
            .unwrap_or_else(|| "replay".to_owned());
        let mut responses = HashMap::with_capacity(entries.len());
        for entry in entries {
            responses.insert(entry.digest, entry.response);
        }
        Ok(ReplayBackend { name, responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl EstimatorBackend for ReplayBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, _req: &EstimateRequest, prompt: &str) -> Result<String, BackendError> {
        let digest = prompt_digest(prompt, &self.name);
        self.responses
            .get(&digest)
            .cloned()
            .ok_or(BackendError::MissingFixture { digest })
    }
}
