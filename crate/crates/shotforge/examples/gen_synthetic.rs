//! Regenerates `data/synthetic.json`, the offline demo project used by the
//! documentation and the end-to-end tests.
//!
//! The project simulates a backlog with six work areas (authentication,
//! billing, search, reporting, mobile, infrastructure), each consistently
//! sized at one story-point value. Every issue carries its area's core
//! vocabulary plus a couple of issue-specific words, so word-overlap
//! similarity reliably groups issues by area — which gives the offline
//! similarity backend a meaningful signal while staying fully
//! deterministic. The split is chronological: the first ten issues of each
//! area train, the last five test.
//!
//! Usage: `cargo run --example gen_synthetic [-- <output-path>]`

use shotforge::domain::{serialize_dataset, Dataset, Issue, SplitSpec};

const THEMES: [(&str, [&str; 4], f64); 6] = [
    ("authentication", ["login", "session", "token", "password"], 1.0),
    ("billing", ["invoice", "payment", "refund", "subscription"], 2.0),
    ("search", ["index", "query", "ranking", "filters"], 3.0),
    ("reporting", ["dashboard", "export", "chart", "metrics"], 5.0),
    ("mobile", ["android", "push", "offline", "gesture"], 8.0),
    ("infrastructure", ["deploy", "docker", "logging", "backup"], 13.0),
];

const VARIANTS: [&str; 15] = [
    "screen", "timeout", "rotation", "policy", "audit", "cache", "redirect", "throttle",
    "recovery", "migration", "banner", "widget", "retry", "cleanup", "probe",
];

const TRAIN_PER_THEME: usize = 10;
const TEST_PER_THEME: usize = 5;

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/synthetic.json".to_owned());

    let per_theme = TRAIN_PER_THEME + TEST_PER_THEME;
    let mut issues = Vec::new();
    let mut train_keys = Vec::new();
    let mut test_keys = Vec::new();
    // Issues are numbered in round-robin order over the themes, like a
    // backlog that grows across all work areas at once.
    for slot in 0..per_theme {
        for (theme_idx, (_, words, points)) in THEMES.iter().enumerate() {
            let ordinal = slot * THEMES.len() + theme_idx + 1;
            let key = format!("SYN-{ordinal}");
            let variant = VARIANTS[slot];
            let issue = Issue {
                key: key.clone(),
                title: format!("Update {} {} {variant}", words[0], words[1]),
                description: format!(
                    "As a user I want the {} {} {variant} improved so that the team can \
                     track work. Ref {key}.",
                    words[2], words[3]
                ),
                story_points: *points,
            };
            issues.push(issue);
            if slot < TRAIN_PER_THEME {
                train_keys.push(key);
            } else {
                test_keys.push(key);
            }
        }
    }

    let dataset = Dataset {
        project: "SYNTH".to_owned(),
        issues,
        split: SplitSpec {
            train_keys,
            test_keys,
            test_truncation: None,
        },
    };
    dataset.validate().expect("generated dataset is valid");

    let json = serialize_dataset(&dataset);
    std::fs::write(&out, json).expect("write dataset");
    println!(
        "wrote {} ({} train / {} test issues)",
        out,
        dataset.split.train_keys.len(),
        dataset.split.test_keys.len()
    );
}
