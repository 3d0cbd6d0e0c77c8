//! Runs the full optimization against the bundled synthetic dataset with
//! the deterministic similarity mock and prints the headline numbers.
//!
//! ```text
//! cargo run --release --example synth_run -- data/synthetic.json
//! ```

use std::time::Instant;

use shotforge::domain::{load_dataset, DatasetFormat};
use shotforge::estimator::SimilarityBackend;
use shotforge::pipeline::{run_optimization, select_representatives, RunConfig};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/synthetic.json".to_owned());
    let dataset = load_dataset(std::path::Path::new(&path), &DatasetFormat::Json)
        .expect("load synthetic dataset");
    let dir = tempfile::tempdir().expect("tempdir");

    let config = RunConfig::default(); // pop 50, 20 generations, seed 42
    let start = Instant::now();
    let outcome = run_optimization(
        &dataset,
        Box::new(SimilarityBackend::new()),
        config,
        dir.path(),
    )
    .expect("run");
    let elapsed = start.elapsed();

    let zero_mae = outcome.zero_shot.mae();
    let reps = select_representatives(&outcome.front).expect("non-empty front");
    let best_mae = reps.best_sae.mae();
    println!("elapsed:        {elapsed:?}");
    println!("backend calls:  {}", outcome.backend_calls);
    println!("estimates:      {}", outcome.estimates_issued);
    println!("front size:     {}", outcome.front.len());
    println!("zero-shot MAE:  {zero_mae:.4}");
    println!(
        "best-SAE:       MAE {:.4}, CI {:.4}, N {}",
        best_mae,
        reps.best_sae.objectives.ci,
        reps.best_sae.objectives.n_shots
    );
    println!(
        "improvement:    {:.2}%",
        100.0 * (zero_mae - best_mae) / zero_mae
    );
    for m in &outcome.front {
        println!(
            "  front: sae {:.3} ci {:.3} n {:2} genes {:?}",
            m.objectives.sae, m.objectives.ci, m.objectives.n_shots, m.chromosome.genes
        );
    }
}
