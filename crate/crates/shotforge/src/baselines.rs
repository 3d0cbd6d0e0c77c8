//! Reference predictors to compare optimized prompts against: predict the
//! mean of the training story points, their median, or a uniformly drawn
//! training value (random guessing), and report each one's MAE on the test
//! set.
//!
//! Random guessing defaults to the closed-form expectation — the mean over
//! test issues of the mean absolute difference to every training value —
//! because it is the unique deterministic summary of the guessing process;
//! a seeded Monte-Carlo mode exists to mirror the simulation-style
//! formulation, and converges to the exact value as draws grow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Issue;
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("sampled mode needs at least one draw")]
    NoDraws,
}

/// Which baseline produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Mean,
    Median,
    RandomGuess,
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BaselineKind::Mean => "mean",
            BaselineKind::Median => "median",
            BaselineKind::RandomGuess => "random_guess",
        })
    }
}

/// How to evaluate random guessing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RandomGuessMode {
    /// Closed-form expected MAE (default; deterministic).
    Exact,
    /// Empirical mean over `draws` seeded replications.
    Sampled { seed: u64, draws: u32 },
}

/// A baseline's MAE on the test set, with per-issue terms for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub name: BaselineKind,
    pub mae: f64,
    /// The constant prediction, for the constant predictors; absent for
    /// random guessing.
    pub prediction: Option<f64>,
    /// Per-test-issue terms in test order: absolute errors of the constant
    /// prediction, or expected absolute errors under uniform guessing.
    /// Empty in sampled mode.
    pub detail: Vec<f64>,
    /// Standard error of the Monte-Carlo mean; sampled mode only.
    pub mc_std_error: Option<f64>,
}

fn require_inputs(train_sps: &[f64], test: &[Issue]) -> Result<(), BaselineError> {
    if train_sps.is_empty() {
        return Err(BaselineError::EmptyInput("train story points"));
    }
    if test.is_empty() {
        return Err(BaselineError::EmptyInput("test issues"));
    }
    Ok(())
}

fn constant_baseline(
    name: BaselineKind,
    prediction: f64,
    test: &[Issue],
) -> BaselineResult {
    let detail: Vec<f64> = test
        .iter()
        .map(|i| (i.story_points - prediction).abs())
        .collect();
    let mae = detail.iter().sum::<f64>() / detail.len() as f64;
    BaselineResult {
        name,
        mae,
        prediction: Some(prediction),
        detail,
        mc_std_error: None,
    }
}

/// Predicts mean(train) for every test issue.
pub fn mean_baseline(train_sps: &[f64], test: &[Issue]) -> Result<BaselineResult, BaselineError> {
    require_inputs(train_sps, test)?;
    let mean = train_sps.iter().sum::<f64>() / train_sps.len() as f64;
    Ok(constant_baseline(BaselineKind::Mean, mean, test))
}

/// Predicts the sample median of train (even count: average of the middle
/// two) for every test issue.
pub fn median_baseline(train_sps: &[f64], test: &[Issue]) -> Result<BaselineResult, BaselineError> {
    require_inputs(train_sps, test)?;
    let mut sorted = train_sps.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite story points"));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    Ok(constant_baseline(BaselineKind::Median, median, test))
}

/// Random guessing: predict a uniformly drawn training story point.
///
/// Exact mode computes the expectation
/// `MAE = (1 / (|test| * |train|)) * sum_i sum_j |a_i - t_j|`; sampled mode
/// replays the guess `draws` times with a seeded generator and reports the
/// empirical mean and its standard error.
pub fn random_guess_baseline(
    train_sps: &[f64],
    test: &[Issue],
    mode: RandomGuessMode,
) -> Result<BaselineResult, BaselineError> {
    require_inputs(train_sps, test)?;
    match mode {
        RandomGuessMode::Exact => {
            let detail: Vec<f64> = test
                .iter()
                .map(|issue| {
                    train_sps
                        .iter()
                        .map(|t| (issue.story_points - t).abs())
                        .sum::<f64>()
                        / train_sps.len() as f64
                })
                .collect();
            let mae = detail.iter().sum::<f64>() / detail.len() as f64;
            Ok(BaselineResult {
                name: BaselineKind::RandomGuess,
                mae,
                prediction: None,
                detail,
                mc_std_error: None,
            })
        }
        RandomGuessMode::Sampled { seed, draws } => {
            if draws == 0 {
                return Err(BaselineError::NoDraws);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut per_draw = Vec::with_capacity(draws as usize);
            for _ in 0..draws {
                let total: f64 = test
                    .iter()
                    .map(|issue| {
                        let guess = train_sps[rng.random_range(0..train_sps.len())];
                        (issue.story_points - guess).abs()
                    })
                    .sum();
                per_draw.push(total / test.len() as f64);
            }
            let mae = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
            let mc_std_error = if draws >= 2 {
                Some(stats::sample_std(&per_draw).expect("draws >= 2") / f64::from(draws).sqrt())
            } else {
                None
            };
            Ok(BaselineResult {
                name: BaselineKind::RandomGuess,
                mae,
                prediction: None,
                detail: Vec::new(),
                mc_std_error,
            })
        }
    }
}
