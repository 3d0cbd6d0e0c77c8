//! End-to-end pipeline behavior through the public API: artifact shape,
//! cache reuse across re-runs, and replayed fixtures.

use std::collections::HashSet;
use std::path::Path;

use shotforge::domain::{Dataset, Issue, SplitSpec};
use shotforge::estimator::{ReplayBackend, SimilarityBackend};
use shotforge::evolve::{dominates, EvolutionConfig};
use shotforge::pipeline::{
    run_optimization, RunConfig, CACHE_FILE, FRONT_POINTS_FILE, HISTORY_FILE, PARETO_FILE,
};

/// Twelve-train/four-test dataset with four word themes mapped to distinct
/// story-point values, so the similarity mock is informative.
fn themed_dataset() -> Dataset {
    let themes = [
        ("login", "session password token auth", 1.0),
        ("invoice", "payment refund ledger tax", 2.0),
        ("search", "index query ranking filter", 5.0),
        ("report", "chart export dashboard pdf", 8.0),
    ];
    let mut issues = Vec::new();
    let mut train_keys = Vec::new();
    let mut test_keys = Vec::new();
    for (t, (name, words, sp)) in themes.iter().enumerate() {
        for copy in 0..4 {
            let key = format!("T{t}-{copy}");
            issues.push(Issue {
                key: key.clone(),
                title: format!("improve {name} flow"),
                description: format!("work on {words} variant {copy}"),
                story_points: *sp,
            });
            if copy < 3 {
                train_keys.push(key);
            } else {
                test_keys.push(key);
            }
        }
    }
    let dataset = Dataset {
        project: "THEMED".to_owned(),
        issues,
        split: SplitSpec {
            train_keys,
            test_keys,
            test_truncation: None,
        },
    };
    dataset.validate().unwrap();
    dataset
}

fn small_config(seed: u64, generations: usize) -> RunConfig {
    RunConfig {
        evolution: EvolutionConfig {
            population_size: 10,
            generations,
            rng_seed: seed,
            ..EvolutionConfig::default()
        },
        ..RunConfig::default()
    }
}

fn run_dir_files(dir: &Path) -> HashSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn completed_run_leaves_exactly_the_documented_artifacts() {
    let dataset = themed_dataset();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        small_config(1, 2),
        dir.path(),
    )
    .unwrap();
    assert!(outcome.completed);
    let files = run_dir_files(dir.path());
    for name in [
        "state.ckpt",
        CACHE_FILE,
        PARETO_FILE,
        HISTORY_FILE,
        FRONT_POINTS_FILE,
        "report.md",
    ] {
        assert!(files.contains(name), "missing {name} in {files:?}");
    }
    // No stray temp files from the atomic writes.
    assert!(
        files.iter().all(|f| !f.ends_with(".tmp")),
        "leftover temp file: {files:?}"
    );
}

#[test]
fn pareto_json_is_valid_and_mutually_non_dominated() {
    let dataset = themed_dataset();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        small_config(2, 3),
        dir.path(),
    )
    .unwrap();

    let text = std::fs::read_to_string(dir.path().join(PARETO_FILE)).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["project"], "THEMED");
    assert_eq!(doc["seed"], 2);
    assert!(doc["zero_shot"]["chromosome"]["genes"]
        .as_array()
        .unwrap()
        .is_empty());
    let front = doc["front"].as_array().unwrap();
    assert_eq!(front.len(), outcome.front.len());
    assert!(doc.get("archive").is_none(), "archive disabled by default");

    for a in &outcome.front {
        for b in &outcome.front {
            assert!(
                !dominates(&a.objectives, &b.objectives),
                "front members must not dominate one another"
            );
        }
    }
}

#[test]
fn history_csv_has_one_row_per_generation_plus_init() {
    let dataset = themed_dataset();
    let dir = tempfile::tempdir().unwrap();
    run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        small_config(3, 4),
        dir.path(),
    )
    .unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join(HISTORY_FILE)).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(headers.iter().next(), Some("generation"));
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5, "init row plus four generations");
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.get(0), Some(i.to_string().as_str()));
    }
}

#[test]
fn front_points_csv_matches_front() {
    let dataset = themed_dataset();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        small_config(4, 2),
        dir.path(),
    )
    .unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join(FRONT_POINTS_FILE)).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), outcome.front.len());
    for (row, member) in rows.iter().zip(&outcome.front) {
        assert_eq!(row.get(0).unwrap(), member.objectives.sae.to_string());
        assert_eq!(
            row.get(2).unwrap(),
            member.objectives.n_shots.to_string()
        );
    }
}

#[test]
fn rerun_of_a_completed_directory_hits_only_the_cache() {
    let dataset = themed_dataset();
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(5, 3);
    let first = run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        config.clone(),
        dir.path(),
    )
    .unwrap();
    assert!(first.backend_calls > 0);

    // Fresh process simulation: new backend, same directory. The checkpoint
    // says the run is complete and every digest is in cache.jsonl, so the
    // backend must never be consulted.
    let second = run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        config,
        dir.path(),
    )
    .unwrap();
    assert!(second.completed);
    assert_eq!(second.backend_calls, 0, "all estimates must come from cache");
    assert_eq!(
        first
            .front
            .iter()
            .map(|m| m.chromosome.clone())
            .collect::<Vec<_>>(),
        second
            .front
            .iter()
            .map(|m| m.chromosome.clone())
            .collect::<Vec<_>>()
    );
}

#[test]
fn replayed_cache_reproduces_the_run_without_the_original_backend() {
    let dataset = themed_dataset();
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(6, 2);
    let original = run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        config.clone(),
        dir.path(),
    )
    .unwrap();

    // Build a replay fixture from the recorded responses and drive an
    // identical run in a fresh directory with it.
    let replay = ReplayBackend::from_cache_file(&dir.path().join(CACHE_FILE)).unwrap();
    let replay_dir = tempfile::tempdir().unwrap();
    let replayed =
        run_optimization(&dataset, Box::new(replay), config, replay_dir.path()).unwrap();

    assert_eq!(original.front, replayed.front);
    assert_eq!(original.zero_shot, replayed.zero_shot);
    assert_eq!(original.history, replayed.history);
}

#[test]
fn interrupting_at_every_boundary_still_converges_to_the_same_front() {
    let dataset = themed_dataset();
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(7, 3);

    let straight_dir = dir.path().join("straight");
    run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        config.clone(),
        &straight_dir,
    )
    .unwrap();
    let reference = std::fs::read(straight_dir.join(PARETO_FILE)).unwrap();

    // Stop after generation 1, then 2, then run to completion — three
    // process lifetimes over one directory.
    let chunked_dir = dir.path().join("chunked");
    for stop in [Some(1), Some(2), None] {
        let outcome = run_optimization(
            &dataset,
            Box::new(SimilarityBackend::new()),
            RunConfig {
                stop_after: stop,
                ..config.clone()
            },
            &chunked_dir,
        )
        .unwrap();
        assert_eq!(outcome.completed, stop.is_none());
    }
    let chunked = std::fs::read(chunked_dir.join(PARETO_FILE)).unwrap();
    assert_eq!(reference, chunked);
}

#[test]
fn backend_call_count_is_bounded_by_evaluations_times_test_size() {
    let dataset = themed_dataset();
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(8, 3);
    let outcome = run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        config.clone(),
        dir.path(),
    )
    .unwrap();
    let test_size = 4u64;
    let pop = config.evolution.population_size as u64;
    let evaluations = pop * (config.evolution.generations as u64 + 1) + 1; // + zero-shot
    assert!(
        outcome.backend_calls <= evaluations * test_size,
        "calls {} exceed bound {}",
        outcome.backend_calls,
        evaluations * test_size
    );
    // Deduplication must actually bite: with 12 training issues and this
    // much crossover there are repeated chromosomes and repeated prompts.
    assert!(
        outcome.backend_calls < evaluations * test_size,
        "expected at least one cache hit"
    );
}
