//! Few-shot example selection for LLM-based story point estimation.
//!
//! Estimating the effort of an agile issue with a language model is cheap to
//! run but very sensitive to which solved issues are pasted into the prompt
//! as examples. This crate treats that choice as a search problem: a
//! chromosome is an ordered, duplicate-free list of training-issue indices,
//! and an NSGA-II loop evolves a Pareto front over three objectives that are
//! all minimized —
//!
//! * the sum of absolute errors over the test split,
//! * a Student-t confidence interval on the absolute-error distribution, and
//! * the number of shots in the prompt.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`] — issues, datasets, splits, chromosomes;
//! * [`stats`] — error metrics and the Student-t confidence interval;
//! * [`evolve`] — the multi-objective search loop and its operators;
//! * [`estimator`] — prompt construction, response parsing, backends, cache;
//! * [`baselines`] — mean / median / random-guess reference predictors;
//! * [`pipeline`] — wiring: per-chromosome evaluation, runs, artifacts.
//!
//! Estimation goes through a pluggable [`estimator::EstimatorBackend`], so
//! the whole search can run against a remote OpenAI-compatible endpoint, a
//! deterministic in-process mock, or a recorded fixture.

pub mod baselines;
pub mod domain;
pub mod estimator;
pub mod evolve;
pub mod pipeline;
pub mod stats;

pub use domain::{AllowedValues, Chromosome, Dataset, Issue, SplitSpec};
pub use estimator::{Estimate, EstimateRequest, Estimator, EstimatorBackend};
pub use evolve::{EvolutionConfig, ObjectiveVector, RankedIndividual};
pub use pipeline::{EvaluatedIndividual, RunConfig, RunOutcome};
