//! Black-box tests of the `shotforge` binary: exit codes, artifact layout,
//! determinism across invocations, resume, and report rendering.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shotforge::domain::{serialize_dataset, Dataset, Issue, SplitSpec};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shotforge"));
    // Tests must not inherit a real key; backend selection decides access.
    cmd.env_remove("SHOTFORGE_API_KEY");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a four-theme dataset (12 train / 4 test) into `dir` and returns
/// its path.
fn write_dataset(dir: &Path) -> PathBuf {
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
        project: "CLIDEMO".to_owned(),
        issues,
        split: SplitSpec {
            train_keys,
            test_keys,
            test_truncation: None,
        },
    };
    let path = dir.join("dataset.json");
    std::fs::write(&path, serialize_dataset(&dataset)).unwrap();
    path
}

fn small_optimize_args<'a>(
    dataset: &'a str,
    output_dir: &'a str,
    extra: &[&'a str],
) -> Vec<&'a str> {
    let mut args = vec![
        "optimize",
        "--dataset",
        dataset,
        "--backend",
        "mock_similarity",
        "--output-dir",
        output_dir,
        "--population-size",
        "8",
        "--generations",
        "2",
        "--seed",
        "9",
    ];
    args.extend_from_slice(extra);
    args
}

fn single_run_dir(output_dir: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(output_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(dirs.len(), 1, "expected exactly one run dir in {output_dir:?}");
    dirs.pop().unwrap()
}

#[test]
fn optimize_writes_the_documented_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let out_dir = tmp.path().join("runs");
    let out = run(&small_optimize_args(
        dataset.to_str().unwrap(),
        out_dir.to_str().unwrap(),
        &[],
    ));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("rank-0 front"), "{text}");
    assert!(text.contains("report:"), "{text}");

    let run_dir = single_run_dir(&out_dir);
    for name in [
        "config.snapshot.json",
        "state.ckpt",
        "cache.jsonl",
        "pareto.json",
        "history.csv",
        "report.md",
        "front_points.csv",
    ] {
        assert!(run_dir.join(name).exists(), "missing {name}");
    }
}

#[test]
fn identical_configs_land_in_the_same_run_dir_and_are_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let out_dir = tmp.path().join("runs");
    let args = small_optimize_args(dataset.to_str().unwrap(), out_dir.to_str().unwrap(), &[]);

    let first = run(&args);
    assert!(first.status.success(), "stderr: {}", stderr(&first));
    let run_dir = single_run_dir(&out_dir);
    let pareto = std::fs::read(run_dir.join("pareto.json")).unwrap();

    let second = run(&args);
    assert!(second.status.success(), "stderr: {}", stderr(&second));
    assert_eq!(single_run_dir(&out_dir), run_dir, "same config, same id");
    let pareto_again = std::fs::read(run_dir.join("pareto.json")).unwrap();
    assert_eq!(pareto, pareto_again, "idempotent re-run");

    // Identical output except the call counter: the re-run answers every
    // prompt from the cache.
    let strip_calls = |s: &str| -> String {
        s.lines()
            .filter(|l| !l.starts_with("backend calls:"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_calls(&stdout(&first)), strip_calls(&stdout(&second)));
    assert!(
        stdout(&second).contains("backend calls: 0"),
        "{}",
        stdout(&second)
    );
}

#[test]
fn snapshot_is_sufficient_to_reproduce_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let out_a = tmp.path().join("a");
    let out = run(&small_optimize_args(
        dataset.to_str().unwrap(),
        out_a.to_str().unwrap(),
        &[],
    ));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let run_a = single_run_dir(&out_a);

    // Feed the snapshot back as the config, redirected to a fresh parent.
    let snapshot = run_a.join("config.snapshot.json");
    let out_b = tmp.path().join("b");
    let replay = run(&[
        "optimize",
        "--config",
        snapshot.to_str().unwrap(),
        "--output-dir",
        out_b.to_str().unwrap(),
    ]);
    assert!(replay.status.success(), "stderr: {}", stderr(&replay));
    let run_b = single_run_dir(&out_b);

    assert_eq!(
        run_a.file_name(),
        run_b.file_name(),
        "output location must not change the run id"
    );
    let a = std::fs::read(run_a.join("pareto.json")).unwrap();
    let b = std::fs::read(run_b.join("pareto.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn interrupted_run_resumes_to_the_straight_runs_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());

    let straight_out = tmp.path().join("straight");
    let out = run(&small_optimize_args(
        dataset.to_str().unwrap(),
        straight_out.to_str().unwrap(),
        &[],
    ));
    assert!(out.status.success());
    let straight = std::fs::read(single_run_dir(&straight_out).join("pareto.json")).unwrap();

    let chunked_out = tmp.path().join("chunked");
    let stopped = run(&small_optimize_args(
        dataset.to_str().unwrap(),
        chunked_out.to_str().unwrap(),
        &["--stop-after", "1"],
    ));
    assert!(stopped.status.success(), "stderr: {}", stderr(&stopped));
    assert!(
        stdout(&stopped).contains("checkpointed after generation 1"),
        "{}",
        stdout(&stopped)
    );
    let run_dir = single_run_dir(&chunked_out);
    assert!(!run_dir.join("pareto.json").exists());

    let resumed = run(&["optimize", "--resume", run_dir.to_str().unwrap()]);
    assert!(resumed.status.success(), "stderr: {}", stderr(&resumed));
    let chunked = std::fs::read(run_dir.join("pareto.json")).unwrap();
    assert_eq!(straight, chunked);
}

#[test]
fn missing_dataset_is_a_config_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "optimize",
        "--backend",
        "mock_similarity",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("dataset"), "{}", stderr(&out));
}

#[test]
fn llm_backend_without_key_fails_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let out_dir = tmp.path().join("runs");
    let out = run(&[
        "optimize",
        "--dataset",
        dataset.to_str().unwrap(),
        "--backend",
        "llm",
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--population-size",
        "8",
        "--generations",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains("SHOTFORGE_API_KEY"),
        "{}",
        stderr(&out)
    );
    // Failing at construction means no run directory was created.
    assert!(!out_dir.exists() || single_run_dir_count(&out_dir) == 0);
}

fn single_run_dir_count(output_dir: &Path) -> usize {
    std::fs::read_dir(output_dir)
        .map(|rd| rd.filter_map(Result::ok).filter(|e| e.path().is_dir()).count())
        .unwrap_or(0)
}

#[test]
fn baselines_prints_table_and_json_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let json_path = tmp.path().join("baselines.json");
    let out = run(&[
        "baselines",
        "--dataset",
        dataset.to_str().unwrap(),
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("mean"));
    assert!(text.contains("median"));
    assert!(text.contains("random_guess"));

    let loaded: Vec<shotforge::baselines::BaselineResult> =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(loaded.len(), 3);
    // Train SPs: {1,2,5,8} × 3 → mean 4, median (2+5)/2 = 3.5.
    assert_eq!(loaded[0].prediction, Some(4.0));
    assert_eq!(loaded[1].prediction, Some(3.5));
    assert!(loaded[2].prediction.is_none());
}

#[test]
fn evaluate_empty_shots_is_zero_shot() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let out = run(&["evaluate", "--dataset", dataset.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("N 0"), "{text}");
    // Four test issues listed.
    for t in 0..4 {
        assert!(text.contains(&format!("T{t}-3")), "{text}");
    }
}

#[test]
fn evaluate_whole_train_set_has_full_n() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let keys: Vec<String> = (0..4)
        .flat_map(|t| (0..3).map(move |c| format!("T{t}-{c}")))
        .collect();
    let shots = keys.join(",");
    let out = run(&["evaluate", "--dataset", dataset.to_str().unwrap(), "--shots", &shots]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("N 12"), "{}", stdout(&out));
}

#[test]
fn evaluate_rejects_duplicate_and_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let dup = run(&[
        "evaluate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--shots",
        "T0-0,T0-0",
    ]);
    assert_eq!(dup.status.code(), Some(2));
    assert!(stderr(&dup).contains("twice"), "{}", stderr(&dup));

    let unknown = run(&[
        "evaluate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--shots",
        "T9-9",
    ]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("T9-9"), "{}", stderr(&unknown));
    // Test-split keys are not valid shots either.
    let test_key = run(&[
        "evaluate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--shots",
        "T0-3",
    ]);
    assert_eq!(test_key.status.code(), Some(2));
}

#[test]
fn report_renders_comparison_and_published_average() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let out_dir = tmp.path().join("runs");
    let out = run(&small_optimize_args(
        dataset.to_str().unwrap(),
        out_dir.to_str().unwrap(),
        &[],
    ));
    assert!(out.status.success());
    let run_dir = single_run_dir(&out_dir);

    let fixture = tmp.path().join("published.json");
    std::fs::write(
        &fixture,
        r#"{"projects":[
            {"name":"project-a","zero_shot_mae":3.87,"best_mae":1.9},
            {"name":"project-b","zero_shot_mae":1.87,"best_mae":0.47},
            {"name":"project-c","zero_shot_mae":2.1,"best_mae":1.0}
        ]}"#,
    )
    .unwrap();

    let report = run(&[
        "report",
        run_dir.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--comparison",
        fixture.to_str().unwrap(),
    ]);
    assert!(report.status.success(), "stderr: {}", stderr(&report));
    let text = stdout(&report);
    assert!(text.contains("| project | mean | median | random_guess | Zero-shot | Best SAE | Best CI |"), "{text}");
    assert!(text.contains("Average improvement: 59.38%."), "{text}");
    assert!(text.contains("CLIDEMO"), "{text}");
}

#[test]
fn report_on_missing_run_dir_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["report", tmp.path().join("nope").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cache_stats_and_purge_manage_the_run_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let out_dir = tmp.path().join("runs");
    run(&small_optimize_args(
        dataset.to_str().unwrap(),
        out_dir.to_str().unwrap(),
        &[],
    ));
    let run_dir = single_run_dir(&out_dir);

    let stats = run(&["cache", "stats", run_dir.to_str().unwrap()]);
    assert!(stats.status.success(), "stderr: {}", stderr(&stats));
    let text = stdout(&stats);
    assert!(text.contains("entries:"), "{text}");
    assert!(text.contains("similarity-mock"), "{text}");

    let purge = run(&["cache", "purge", run_dir.to_str().unwrap()]);
    assert!(purge.status.success());
    assert!(!run_dir.join("cache.jsonl").exists());

    // Stats on a purged cache is an input error; purging again is a no-op.
    let stats = run(&["cache", "stats", run_dir.to_str().unwrap()]);
    assert_eq!(stats.status.code(), Some(2));
    let purge = run(&["cache", "purge", run_dir.to_str().unwrap()]);
    assert!(purge.status.success());
    assert!(stdout(&purge).contains("nothing to purge"));
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = write_dataset(tmp.path());
    let config = tmp.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "dataset = {:?}\nbackend = \"mock_similarity\"\npopulation_size = 8\ngenerations = 5\nseed = 9\noutput_dir = {:?}\n",
            dataset.to_str().unwrap(),
            tmp.path().join("runs").to_str().unwrap(),
        ),
    )
    .unwrap();

    // Flag shrinks generations from 5 to 1: the run must record exactly one
    // generation beyond init.
    let out = run(&[
        "optimize",
        "--config",
        config.to_str().unwrap(),
        "--generations",
        "1",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let run_dir = single_run_dir(&tmp.path().join("runs"));
    let history = std::fs::read_to_string(run_dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "header + init + one generation:\n{history}");
}

#[test]
fn invalid_config_file_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "population_sise = 10\n").unwrap();
    let out = run(&["optimize", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("population_sise"), "{}", stderr(&out));
}
