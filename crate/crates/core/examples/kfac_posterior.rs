//! Posterior approximations: exact GGN, diagonal and KFAC.
//!
//! Prints the marginal posterior standard deviation of a few parameters per
//! approximation and how far the approximate epistemic covariance is from
//! the exact one.

use lowrank_laplace::curvature::{curvature_factor, ggn_diag, kfac_factors};
use lowrank_laplace::data::{normalize, synth_friedman_like};
use lowrank_laplace::metrics::relative_error;
use lowrank_laplace::model::{Network, NetworkSpec};
use lowrank_laplace::posterior::PosteriorApprox;
use lowrank_laplace::predictive::epistemic_cov_full;
use lowrank_laplace::train::{train_map, TrainConfig};

fn main() -> anyhow::Result<()> {
    let (data, _) = normalize(&synth_friedman_like(300, 4, 0.1, 2)?)?;
    let (train, eval) = (data.subset(&(0..250).collect::<Vec<_>>()), data.subset(&(250..300).collect::<Vec<_>>()));
    let net = Network::init(NetworkSpec::new(vec![4, 16, 16, 1])?, 2);
    let net = train_map(&net, &train, &TrainConfig::default(), None)?.net;

    let lambda = 1.0;
    let factor = curvature_factor(&net, &train)?;
    let posts = [
        ("full", PosteriorApprox::full(&factor, lambda)?),
        ("diagonal", PosteriorApprox::diagonal(&ggn_diag(&factor)?, lambda)?),
        ("kfac", PosteriorApprox::kfac(&kfac_factors(&net, &train)?, lambda)?),
    ];

    let jac = net.jacobian(&eval.x)?;
    let exact = epistemic_cov_full(&jac, &posts[0].1)?;
    for (name, post) in &posts {
        let sd: Vec<String> = post
            .variance_diag()?
            .iter()
            .take(6)
            .map(|v| format!("{:.3}", v.sqrt()))
            .collect();
        let cov = epistemic_cov_full(&jac, post)?;
        println!(
            "{name:<9} sd(θ₀..θ₅) = [{}]   Σ_X rel. error = {:.3}",
            sd.join(", "),
            relative_error(&exact, &cov)?
        );
    }
    Ok(())
}
