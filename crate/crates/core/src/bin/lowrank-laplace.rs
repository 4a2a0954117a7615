use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lowrank_laplace::experiment::{
    compare_report, run_curvature, run_experiment, run_projection, run_training, ExperimentConfig, RunSummary,
};

#[derive(Parser)]
#[command(version, about = "Linearized Laplace subspace experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.epochs=200` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set output_dir=...`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(dir) = &self.output_dir {
            overrides.push(format!("output_dir={:?}", dir.display().to_string()));
        }
        Ok(ExperimentConfig::load(&self.config, &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train (or reuse) the MAP network for every seed.
    Train(ConfigArgs),
    /// Compute and cache curvature factors.
    Curvature(ConfigArgs),
    /// Build and save every projector, scoring each cell.
    Project(ConfigArgs),
    /// Run the full pipeline and write metric CSVs.
    Evaluate(ConfigArgs),
    /// Summarize metric CSVs in a result directory.
    Report {
        dir: PathBuf,
    },
}

fn summarize(summary: &RunSummary) -> bool {
    for s in &summary.seeds {
        eprintln!(
            "seed {}: {} ok, {} skipped, {} failed",
            s.seed, s.ok, s.skipped, s.failed
        );
    }
    if let Some(f) = summary.agreement.fraction() {
        eprintln!("ordering agreement: {f:.4}");
    }
    summary.all_succeeded()
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    Ok(match cli.command {
        Command::Train(args) => run_training(&args.load()?)? == 0,
        Command::Curvature(args) => run_curvature(&args.load()?)? == 0,
        Command::Project(args) => summarize(&run_projection(&args.load()?)?),
        Command::Evaluate(args) => summarize(&run_experiment(&args.load()?)?),
        Command::Report { dir } => {
            print!("{}", compare_report(&dir)?.render());
            true
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
