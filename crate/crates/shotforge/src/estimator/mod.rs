//! Story-point estimation: prompt construction, response parsing, and the
//! caching, retrying [`Estimator`] that drives a pluggable backend.
//!
//! The prompt is a frozen single-line template (whitespace between segments
//! normalized to single spaces, one trailing newline): a fixed header naming
//! the allowed values, an optional block of example stories with their
//! points, the output instruction, and the target story in angle brackets.
//! [`build_prompt`] is pure and injective over (shots, target, allowed), so
//! its bytes — together with the backend's model name — key the persistent
//! response cache.
//!
//! Responses are free-form text; [`parse_estimate`] extracts the number,
//! preferring one directly before a "story point(s)" token. Parsed values
//! are returned as-is — they are not snapped to the allowed list unless
//! [`EstimatorOptions::snap_to_allowed`] is set.
//!
//! [`Estimator::estimate`] retries transient failures (unparseable output,
//! HTTP 429/5xx, timeouts, transport errors) with exponential backoff and,
//! once retries are exhausted, can fall back to the median allowed value so
//! a long optimization run survives a flaky endpoint; fallback results are
//! flagged, cached, and counted by callers.

mod backends;
mod cache;

pub use backends::{
    llm_backend, BackendError, EstimatorBackend, EstimatorConfig, LlmBackend, RateLimiter,
    ReplayBackend, SimilarityBackend, API_KEY_ENV,
};
pub use cache::{prompt_digest, read_entries, Cache, CacheEntry, CacheError};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AllowedValues, Issue};

/// One worked example embedded in the prompt.
///
/// `text` must be non-empty and `story_points` positive; shots built via
/// [`Shot::from_issue`] from a validated dataset satisfy both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub text: String,
    pub story_points: f64,
}

impl Shot {
    pub fn from_issue(issue: &Issue) -> Shot {
        Shot {
            text: issue.text(),
            story_points: issue.story_points,
        }
    }
}

/// Everything needed to render one prompt: the ordered example shots (may
/// be empty for a zero-shot prompt), the target issue text, and the
/// project's allowed story-point values.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRequest {
    pub shots: Vec<Shot>,
    pub target_text: String,
    pub allowed: AllowedValues,
}

/// Failure modes of a single estimation call.
#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("could not parse a numeric estimate from {response:?}")]
    Unparseable { response: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Renders a story-point value the way it appears in prompts and mock
/// responses: integral values without a decimal point (`3`, not `3.0`).
pub fn format_points(value: f64) -> String {
    format!("{value}")
}

/// Renders the estimation prompt for `req`.
///
/// Pure: the same request always yields identical bytes, and distinct shot
/// orderings yield distinct bytes (shot order is significant end-to-end).
pub fn build_prompt(req: &EstimateRequest) -> String {
    let mut segments: Vec<String> = Vec::with_capacity(req.shots.len() + 4);
    segments.push(
        "You are asked to estimate effort for the user story given in <>.".to_owned(),
    );
    let values = req
        .allowed
        .values()
        .iter()
        .map(|&v| format_points(v))
        .collect::<Vec<_>>()
        .join(", ");
    segments.push(format!("Use {{{values}}} as estimated value."));
    if !req.shots.is_empty() {
        segments.push(
            "A few example user stories from the same project with their estimated effort \
             are given in the following:"
                .to_owned(),
        );
        for shot in &req.shots {
            segments.push(format!(
                "{}. {} Story Points.",
                shot.text,
                format_points(shot.story_points)
            ));
        }
    }
    segments.push(
        "Estimate the following user story and generate the output as a single scalar \
         number only, equal to the estimated story point value."
            .to_owned(),
    );
    segments.push(format!("<{}>", req.target_text));
    let mut prompt = segments.join(" ");
    prompt.push('\n');
    prompt
}

static POINTS_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*story\s*points?").expect("valid regex")
});
static NUMBER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid regex"));

/// Extracts the estimated value from a raw model response.
///
/// A number immediately preceding a case-insensitive "story point(s)" token
/// wins; otherwise the first numeric literal anywhere does. The value is
/// returned exactly as written — never snapped to the allowed list.
pub fn parse_estimate(raw: &str) -> Result<f64, EstimateError> {
    let text = POINTS_RE
        .captures(raw)
        .map(|c| c.get(1).expect("group 1 exists").as_str())
        .or_else(|| NUMBER_RE.find(raw).map(|m| m.as_str()));
    match text {
        Some(t) => t.parse::<f64>().map_err(|_| EstimateError::Unparseable {
            response: raw.to_owned(),
        }),
        None => Err(EstimateError::Unparseable {
            response: raw.to_owned(),
        }),
    }
}

/// Behavior knobs of [`Estimator::estimate`], independent of any backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Extra attempts after the first on retryable failures.
    pub max_retries: u32,
    /// Base of the exponential backoff between attempts; zero disables
    /// sleeping (tests).
    pub retry_backoff: std::time::Duration,
    /// After exhaustion, return the median allowed value (flagged) instead
    /// of an error.
    pub fallback_enabled: bool,
    /// Snap returned values to the nearest allowed value (ties toward the
    /// lower). Cached entries always hold the raw parsed value.
    pub snap_to_allowed: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            max_retries: 2,
            retry_backoff: std::time::Duration::from_millis(500),
            fallback_enabled: true,
            snap_to_allowed: false,
        }
    }
}

/// The outcome of one estimation call.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub raw_response: String,
    /// True when the value is the median-of-allowed fallback rather than a
    /// parsed model response.
    pub fallback: bool,
    /// True when the result came from the cache without a backend call.
    pub cache_hit: bool,
}

/// Caching, retrying front door to an [`EstimatorBackend`].
///
/// Safe to share across threads: cache reads take a read lock, writes are
/// serialized, and the backend must be stateless per call.
pub struct Estimator {
    backend: Box<dyn EstimatorBackend>,
    cache: Cache,
    options: EstimatorOptions,
    backend_calls: AtomicU64,
}

impl Estimator {
    pub fn new(backend: Box<dyn EstimatorBackend>, cache: Cache, options: EstimatorOptions) -> Self {
        Estimator {
            backend,
            cache,
            options,
            backend_calls: AtomicU64::new(0),
        }
    }

    /// Number of backend invocations so far (cache hits cost none).
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    /// The model identity used for cache keying.
    pub fn model_name(&self) -> &str {
        self.backend.name()
    }

    fn snap(&self, value: f64, allowed: &AllowedValues) -> f64 {
        if self.options.snap_to_allowed {
            allowed.nearest(value)
        } else {
            value
        }
    }

    /// Estimates story points for `req`.
    ///
    /// Flow: render the prompt, look it up in the cache (digest of prompt
    /// bytes + model name), and on a miss call the backend up to
    /// `1 + max_retries` times, retrying only unparseable responses and
    /// retryable backend failures. Exhaustion yields the flagged median
    /// fallback when enabled, otherwise the last error.
    pub fn estimate(&self, req: &EstimateRequest) -> Result<Estimate, EstimateError> {
        let prompt = build_prompt(req);
        let digest = prompt_digest(&prompt, self.backend.name());
        if let Some(entry) = self.cache.get(&digest) {
            return Ok(Estimate {
                value: self.snap(entry.estimate, &req.allowed),
                raw_response: entry.response,
                fallback: entry.fallback,
                cache_hit: true,
            });
        }

        let attempts = self.options.max_retries + 1;
        let mut last_err = EstimateError::Unparseable {
            response: String::new(),
        };
        for attempt in 0..attempts {
            if attempt > 0 && !self.options.retry_backoff.is_zero() {
                std::thread::sleep(self.options.retry_backoff * 2u32.pow(attempt - 1));
            }
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(req, &prompt) {
                Ok(raw) => match parse_estimate(&raw) {
                    Ok(value) => {
                        self.cache.put(CacheEntry::now(
                            digest,
                            self.backend.name().to_owned(),
                            raw.clone(),
                            value,
                            false,
                        ))?;
                        return Ok(Estimate {
                            value: self.snap(value, &req.allowed),
                            raw_response: raw,
                            fallback: false,
                            cache_hit: false,
                        });
                    }
                    Err(err) => last_err = err,
                },
                Err(err) => {
                    let retryable = err.is_retryable();
                    last_err = EstimateError::Backend(err);
                    if !retryable {
                        break;
                    }
                }
            }
        }

        if !self.options.fallback_enabled {
            return Err(last_err);
        }
        let value = req.allowed.median();
        let raw_response = match &last_err {
            EstimateError::Unparseable { response } => response.clone(),
            _ => String::new(),
        };
        self.cache.put(CacheEntry::now(
            prompt_digest(&prompt, self.backend.name()),
            self.backend.name().to_owned(),
            raw_response.clone(),
            value,
            true,
        ))?;
        Ok(Estimate {
            value,
            raw_response,
            fallback: true,
            cache_hit: false,
        })
    }
}
