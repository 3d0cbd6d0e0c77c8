//! Markdown rendering for the `report` command: one comparison table per
//! run (baselines and front representatives side by side) plus an optional
//! published-results fixture with its average improvement.

use std::path::Path;

use serde::Deserialize;

use shotforge::baselines::BaselineResult;
use shotforge::pipeline::{
    genes_label, improvement_report, select_representatives, EvaluatedIndividual, PARETO_FILE,
};

use crate::CliError;

/// The subset of `pareto.json` the report needs.
#[derive(Debug, Deserialize)]
pub struct ParetoView {
    pub project: String,
    pub seed: u64,
    pub zero_shot: EvaluatedIndividual,
    pub front: Vec<EvaluatedIndividual>,
}

pub fn load_pareto(run_dir: &Path) -> Result<ParetoView, CliError> {
    let path = run_dir.join(PARETO_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Input(format!(
            "no completed run at {}: {e} (run `optimize` first)",
            path.display()
        ))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("malformed {}: {e}", path.display())))
}

/// One published project's numbers for side-by-side comparison.
#[derive(Debug, Clone, Deserialize)]
pub struct ComparisonProject {
    pub name: String,
    pub zero_shot_mae: f64,
    pub best_mae: f64,
}

#[derive(Debug, Deserialize)]
pub struct ComparisonFixture {
    pub projects: Vec<ComparisonProject>,
}

pub fn load_comparison(path: &Path) -> Result<ComparisonFixture, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let fixture: ComparisonFixture = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("malformed fixture {}: {e}", path.display())))?;
    if fixture.projects.is_empty() {
        return Err(CliError::Input(format!(
            "fixture {} lists no projects",
            path.display()
        )));
    }
    Ok(fixture)
}

/// `MAE (N=…, CI=…)` — the cell format for front members.
fn member_cell(m: &EvaluatedIndividual) -> String {
    format!(
        "{:.2} (N={}, CI={:.2})",
        m.mae(),
        m.objectives.n_shots,
        m.objectives.ci
    )
}

/// Renders the full report: run table, improvement line, optional
/// published-fixture table.
pub fn render_comparison(
    view: &ParetoView,
    baselines: Option<&[BaselineResult]>,
    fixture: Option<&ComparisonFixture>,
) -> Result<String, CliError> {
    let mut out = String::new();
    out.push_str(&format!("# Estimation comparison — {}\n\n", view.project));
    out.push_str(&format!("Run seed: {}.\n\n", view.seed));

    let reps = select_representatives(&view.front);
    let zero_on_front = reps.as_ref().is_some_and(|r| r.zero_shot.is_some());

    // Header: baselines first (when present), then the prompt columns.
    let mut header: Vec<String> = vec!["project".to_owned()];
    let mut cells: Vec<String> = vec![view.project.clone()];
    if let Some(baselines) = baselines {
        for b in baselines {
            header.push(b.name.to_string());
            cells.push(format!("{:.2}", b.mae));
        }
    }
    header.push("Zero-shot".to_owned());
    cells.push(if zero_on_front {
        member_cell(&view.zero_shot)
    } else {
        format!("{} †", member_cell(&view.zero_shot))
    });

    let best_sae_beats_baselines = match (&reps, baselines) {
        (Some(r), Some(baselines)) => {
            !baselines.is_empty() && baselines.iter().all(|b| r.best_sae.mae() < b.mae)
        }
        _ => false,
    };
    header.push("Best SAE".to_owned());
    header.push("Best CI".to_owned());
    match &reps {
        Some(r) => {
            let best_cell = member_cell(r.best_sae);
            cells.push(if best_sae_beats_baselines {
                format!("**{best_cell}**")
            } else {
                best_cell
            });
            cells.push(member_cell(r.best_ci));
        }
        None => {
            cells.push("—".to_owned());
            cells.push("—".to_owned());
        }
    }

    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!(
        "|{}\n",
        header.iter().map(|_| "---|").collect::<String>()
    ));
    out.push_str(&format!("| {} |\n", cells.join(" | ")));
    if !zero_on_front {
        out.push_str("\n† zero-shot reference; not a member of the Pareto front.\n");
    }
    if best_sae_beats_baselines {
        out.push_str("\nBold: best-SAE beats every baseline.\n");
    }

    if let Some(r) = &reps {
        let zero_mae = view.zero_shot.mae();
        if zero_mae > 0.0 {
            let best_mae = r.best_sae.mae();
            out.push_str(&format!(
                "\nBest-SAE member ({} shots: {}) improves MAE over zero-shot by {:.2}% ({:.2} → {:.2}).\n",
                r.best_sae.objectives.n_shots,
                genes_label(&r.best_sae.chromosome),
                100.0 * (zero_mae - best_mae) / zero_mae,
                zero_mae,
                best_mae
            ));
        }
    }

    if let Some(fixture) = fixture {
        out.push_str("\n## Published comparison\n\n");
        out.push_str("| project | zero-shot MAE | best MAE | improvement |\n");
        out.push_str("|---|---|---|---|\n");
        let zero: Vec<f64> = fixture.projects.iter().map(|p| p.zero_shot_mae).collect();
        let best: Vec<f64> = fixture.projects.iter().map(|p| p.best_mae).collect();
        for p in &fixture.projects {
            out.push_str(&format!(
                "| {} | {:.2} | {:.2} | {:.2}% |\n",
                p.name,
                p.zero_shot_mae,
                p.best_mae,
                100.0 * (p.zero_shot_mae - p.best_mae) / p.zero_shot_mae
            ));
        }
        let average = improvement_report(&zero, &best)
            .map_err(|e| CliError::Input(format!("fixture: {e}")))?;
        out.push_str(&format!("\nAverage improvement: {average:.2}%.\n"));
    }

    Ok(out)
}
