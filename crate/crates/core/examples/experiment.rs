//! Config-driven sweep over projectors, subspace sizes and seeds.
//!
//! Equivalent to `lowrank-laplace evaluate --config examples/desk.toml`;
//! writes per-seed and aggregate CSVs and prints the comparison table.
//!
//! ```bash
//! cargo run --release --example experiment -- examples/desk.toml seeds=[0,1]
//! ```

use std::path::PathBuf;

use lowrank_laplace::experiment::{compare_report, run_experiment, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/desk.toml")));
    let overrides: Vec<String> = args.collect();
    let cfg = ExperimentConfig::load(&path, &overrides)?;

    let summary = run_experiment(&cfg)?;
    for s in &summary.seeds {
        println!("seed {}: {} cells ok, {} skipped, {} failed", s.seed, s.ok, s.skipped, s.failed);
    }
    print!("{}", compare_report(&cfg.output_dir)?.render());
    Ok(())
}
