//! Parameters the network output does not react to.
//!
//! Computes per-parameter sensitivities (mean absolute Jacobian entry) on
//! the training data, reports the dead fraction and writes the sorted
//! per-sample heatmap to `sensitivity.csv`.

use std::path::Path;

use lowrank_laplace::data::synth_blobs;
use lowrank_laplace::metrics::{dead_parameter_fraction, DEFAULT_DEAD_THRESHOLD};
use lowrank_laplace::model::{Network, NetworkSpec};
use lowrank_laplace::train::{train_map, TrainConfig};

fn main() -> anyhow::Result<()> {
    let data = synth_blobs(200, 3, 2, 2.0, 4)?;
    let net = Network::init(NetworkSpec::new(vec![2, 32, 32, 3])?, 4);
    let net = train_map(&net, &data, &TrainConfig::default(), None)?.net;

    let report = dead_parameter_fraction(&net.jacobian(&data.x)?, DEFAULT_DEAD_THRESHOLD)?;
    println!(
        "{} of {} parameters dead ({:.1}%) at threshold {:e}",
        (report.fraction * net.param_count() as f64).round(),
        net.param_count(),
        100.0 * report.fraction,
        report.threshold_rel
    );
    let top: Vec<String> = report.order.iter().take(5).map(|i| format!("θ{i}")).collect();
    println!("most sensitive: {}", top.join(", "));

    let out = Path::new("sensitivity.csv");
    report.write_csv(out)?;
    println!("heatmap written to {}", out.display());
    Ok(())
}
