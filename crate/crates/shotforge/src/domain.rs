//! Core data types: issues, datasets, train/test splits, chromosomes.
//!
//! A [`Dataset`] is immutable after [`load_dataset`] and safe to share across
//! threads. Ordering matters everywhere: issues keep file order, split keys
//! keep their declared order, and "the first N test issues" always means
//! split order, never a re-sort.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from dataset ingestion and structural validation.
#[derive(Debug, Error)]
pub enum DomainError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

/// One agile work item with its actual story points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub key: String,
    pub title: String,
    pub description: String,
    pub story_points: f64,
}

impl Issue {
    /// The text used in prompts and similarity computations: title and
    /// description joined by ". ". A blank description yields the title
    /// alone so no dangling separator leaks into prompts.
    pub fn text(&self) -> String {
        if self.description.trim().is_empty() {
            self.title.clone()
        } else {
            format!("{}. {}", self.title, self.description)
        }
    }
}

/// Ordered train/test split, by issue key.
///
/// `test_truncation` limits the effective test set to the first N test keys
/// in split order. It comes from run configuration, never from the dataset
/// file itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(rename = "train")]
    pub train_keys: Vec<String>,
    #[serde(rename = "test")]
    pub test_keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_truncation: Option<usize>,
}

/// A project's issues plus the split that separates candidate shots from the
/// evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub project: String,
    pub issues: Vec<Issue>,
    pub split: SplitSpec,
}

/// The distinct story-point values observed in the train split, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllowedValues {
    values: Vec<f64>,
}

impl AllowedValues {
    /// Builds the sorted, deduplicated value list. Values must be positive
    /// and finite; the list must be non-empty.
    pub fn new(mut values: Vec<f64>) -> Result<Self, DomainError> {
        if values.is_empty() {
            return Err(DomainError::Validation(
                "allowed values list is empty".into(),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(DomainError::Validation(format!(
                "story points must be positive and finite, got {bad}"
            )));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
        values.dedup();
        Ok(AllowedValues { values })
    }

    /// The values, strictly increasing.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sample median: middle value, or the average of the two middle values
    /// for an even count. Used as the fallback estimate.
    pub fn median(&self) -> f64 {
        let n = self.values.len();
        if n % 2 == 1 {
            self.values[n / 2]
        } else {
            (self.values[n / 2 - 1] + self.values[n / 2]) / 2.0
        }
    }

    /// The allowed value nearest to `v`; ties resolve to the lower value.
    pub fn nearest(&self, v: f64) -> f64 {
        let mut best = self.values[0];
        let mut best_dist = (v - best).abs();
        for &cand in &self.values[1..] {
            let d = (v - cand).abs();
            if d < best_dist {
                best = cand;
                best_dist = d;
            }
        }
        best
    }
}

/// An ordered, duplicate-free list of indices into the train split — the
/// set of shots a prompt will carry, in prompt order. Length zero is legal
/// and means zero-shot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Chromosome {
    pub genes: Vec<usize>,
}

impl Chromosome {
    pub fn new(genes: Vec<usize>) -> Self {
        Chromosome { genes }
    }

    pub fn empty() -> Self {
        Chromosome { genes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    /// Checks the two structural invariants: no duplicate genes, and every
    /// gene addresses an existing train issue.
    pub fn validate(&self, train_size: usize) -> Result<(), DomainError> {
        let mut seen = HashSet::with_capacity(self.genes.len());
        for &g in &self.genes {
            if g >= train_size {
                return Err(DomainError::Validation(format!(
                    "gene {g} out of range for train size {train_size}"
                )));
            }
            if !seen.insert(g) {
                return Err(DomainError::Validation(format!("duplicate gene {g}")));
            }
        }
        Ok(())
    }
}

/// Input format accepted by [`load_dataset`].
#[derive(Debug, Clone)]
pub enum DatasetFormat {
    /// Single JSON document embedding issues and split.
    Json,
    /// CSV of issues (`key,title,description,story_points`) plus a separate
    /// split JSON (`{"train": [...], "test": [...]}`).
    Csv { split_path: PathBuf, project: String },
}

impl Dataset {
    /// Validates all structural invariants: unique non-empty keys, positive
    /// finite story points, duplicate-free split lists that resolve to
    /// issues, disjoint train/test, and non-empty splits.
    pub fn validate(&self) -> Result<(), DomainError> {
        let mut keys = HashSet::with_capacity(self.issues.len());
        for issue in &self.issues {
            if issue.key.is_empty() {
                return Err(DomainError::Validation("issue with empty key".into()));
            }
            if !keys.insert(issue.key.as_str()) {
                return Err(DomainError::Validation(format!(
                    "duplicate issue key {:?}",
                    issue.key
                )));
            }
            if !issue.story_points.is_finite() || issue.story_points <= 0.0 {
                return Err(DomainError::Validation(format!(
                    "issue {:?} has non-positive story points {}",
                    issue.key, issue.story_points
                )));
            }
        }
        for (name, list) in [("train", &self.split.train_keys), ("test", &self.split.test_keys)] {
            if list.is_empty() {
                return Err(DomainError::Validation(format!("{name} split is empty")));
            }
            let mut seen = HashSet::with_capacity(list.len());
            for key in list {
                if !keys.contains(key.as_str()) {
                    return Err(DomainError::Validation(format!(
                        "{name} split references unknown key {key:?}"
                    )));
                }
                if !seen.insert(key.as_str()) {
                    return Err(DomainError::Validation(format!(
                        "{name} split lists key {key:?} twice"
                    )));
                }
            }
        }
        let train: HashSet<&str> = self.split.train_keys.iter().map(String::as_str).collect();
        if let Some(shared) = self.split.test_keys.iter().find(|k| train.contains(k.as_str())) {
            return Err(DomainError::Validation(format!(
                "key {shared:?} appears in both train and test splits"
            )));
        }
        if let Some(t) = self.split.test_truncation {
            if t == 0 {
                return Err(DomainError::Validation(
                    "test_truncation must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Returns the dataset with the given test truncation applied.
    pub fn with_truncation(mut self, truncation: Option<usize>) -> Self {
        self.split.test_truncation = truncation;
        self
    }

    fn issue_by_key(&self, key: &str) -> Option<&Issue> {
        self.issues.iter().find(|i| i.key == key)
    }

    /// Train issues in split order — the pool chromosomes index into.
    pub fn train_issues(&self) -> Vec<&Issue> {
        self.split
            .train_keys
            .iter()
            .map(|k| self.issue_by_key(k).expect("validated dataset"))
            .collect()
    }

    /// Test issues in split order with truncation applied and no minimum
    /// size requirement. Baselines use this directly.
    pub fn truncated_test_issues(&self) -> Vec<&Issue> {
        let limit = self
            .split
            .test_truncation
            .unwrap_or(self.split.test_keys.len());
        self.split
            .test_keys
            .iter()
            .take(limit)
            .map(|k| self.issue_by_key(k).expect("validated dataset"))
            .collect()
    }

    /// The evaluation set: first `min(test_truncation, |test|)` test issues
    /// in split order. Errors when fewer than 2 issues remain, because the
    /// confidence-interval objective needs at least one degree of freedom.
    pub fn effective_test_set(&self) -> Result<Vec<&Issue>, DomainError> {
        let test = self.truncated_test_issues();
        if test.len() < 2 {
            return Err(DomainError::Validation(format!(
                "effective test set has {} issue(s); at least 2 are required",
                test.len()
            )));
        }
        Ok(test)
    }

    /// Distinct story-point values from the TRAIN split only, ascending;
    /// these are the values the estimator is told to choose from.
    pub fn allowed_values(&self) -> Result<AllowedValues, DomainError> {
        AllowedValues::new(
            self.train_issues()
                .iter()
                .map(|i| i.story_points)
                .collect(),
        )
    }
}

/// Loads and validates a dataset from disk.
pub fn load_dataset(path: &Path, format: &DatasetFormat) -> Result<Dataset, DomainError> {
    let dataset = match format {
        DatasetFormat::Json => {
            let raw = read(path)?;
            serde_json::from_str::<Dataset>(&raw)
                .map_err(|e| DomainError::Parse(format!("{}: {e}", path.display())))?
        }
        DatasetFormat::Csv { split_path, project } => {
            let mut reader = csv::Reader::from_path(path).map_err(|e| {
                DomainError::Parse(format!("{}: {e}", path.display()))
            })?;
            let mut issues = Vec::new();
            for record in reader.deserialize::<Issue>() {
                issues.push(record.map_err(|e| {
                    DomainError::Parse(format!("{}: {e}", path.display()))
                })?);
            }
            let raw = read(split_path)?;
            let split = serde_json::from_str::<SplitSpec>(&raw)
                .map_err(|e| DomainError::Parse(format!("{}: {e}", split_path.display())))?;
            Dataset {
                project: project.clone(),
                issues,
                split,
            }
        }
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Serializes a dataset to the same JSON document [`load_dataset`] accepts.
pub fn serialize_dataset(dataset: &Dataset) -> String {
    let mut out = serde_json::to_string_pretty(dataset).expect("dataset serializes");
    out.push('\n');
    out
}

fn read(path: &Path) -> Result<String, DomainError> {
    std::fs::read_to_string(path).map_err(|source| DomainError::Io {
        path: path.to_path_buf(),
        source,
    })
}
