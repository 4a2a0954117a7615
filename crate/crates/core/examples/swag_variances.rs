//! SWAG variances versus Laplace posterior variances.
//!
//! Runs constant-rate SGD from the MAP, collects per-epoch snapshots and
//! checks how many of the top-`s` parameters by SWAG variance are also top
//! by diagonal-posterior variance.

use std::collections::HashSet;

use lowrank_laplace::curvature::{curvature_factor, ggn_diag};
use lowrank_laplace::data::{normalize, synth_sincos};
use lowrank_laplace::model::{Network, NetworkSpec};
use lowrank_laplace::posterior::PosteriorApprox;
use lowrank_laplace::subspace::ranked_indices;
use lowrank_laplace::train::{run_swag, train_map, SwagConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let (train, _) = normalize(&synth_sincos(200, 0.1, (-3.0, 3.0), 5)?)?;
    let net = Network::init(NetworkSpec::new(vec![1, 16, 16, 1])?, 5);
    let net = train_map(&net, &train, &TrainConfig::default(), None)?.net;

    let swag = run_swag(&net, &train, &SwagConfig::per_epoch(100, 1e-2, 32, train.len(), 6), 1.0)?;
    let swag_var = swag.variance();
    let laplace_var = PosteriorApprox::diagonal(&ggn_diag(&curvature_factor(&net, &train)?)?, 1.0)?.variance_diag()?;
    println!("{} SWAG snapshots, mean variance {:.3e}", swag.snapshots, swag_var.mean());

    let by_swag = ranked_indices(&swag_var);
    let by_laplace = ranked_indices(&laplace_var);
    for s in [10, 50, 100] {
        let a: HashSet<_> = by_swag[..s].iter().collect();
        let overlap = by_laplace[..s].iter().filter(|i| a.contains(i)).count();
        println!("top-{s:<3} overlap: {overlap}/{s}");
    }
    Ok(())
}
