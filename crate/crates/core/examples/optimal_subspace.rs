//! The optimal subspace model on a toy regression problem.
//!
//! Trains a small MLP on noisy `sin(x/4)·cos(x/2)`, builds the exact GGN
//! posterior and compares the subspace covariance of the optimal projector
//! with the best rank-`s` approximation of the full epistemic covariance:
//! the two columns agree.
//!
//! ```bash
//! cargo run --release --example optimal_subspace
//! ```

use lowrank_laplace::curvature::curvature_factor;
use lowrank_laplace::data::{normalize, synth_sincos};
use lowrank_laplace::linalg::sym_eig;
use lowrank_laplace::metrics::relative_error;
use lowrank_laplace::model::{Network, NetworkSpec};
use lowrank_laplace::posterior::PosteriorApprox;
use lowrank_laplace::predictive::{epistemic_cov_full, epistemic_cov_subspace};
use lowrank_laplace::subspace::{optimal_projector_from, DEFAULT_RANK_TOL};
use lowrank_laplace::train::{train_map, TrainConfig};

fn main() -> anyhow::Result<()> {
    let (train, _) = normalize(&synth_sincos(200, 0.1, (-3.0, 3.0), 0)?)?;
    let (eval, _) = normalize(&synth_sincos(50, 0.1, (-3.0, 3.0), 1)?)?;

    let net = Network::init(NetworkSpec::new(vec![1, 16, 16, 1])?, 0);
    let net = train_map(&net, &train, &TrainConfig::default(), None)?.net;
    println!("p = {} parameters", net.param_count());

    let lambda = 1.0;
    let factor = curvature_factor(&net, &train)?;
    let post = PosteriorApprox::full(&factor, lambda)?;
    let jac = net.jacobian(&eval.x)?;
    let sigma_x = epistemic_cov_full(&jac, &post)?;

    let eig = sym_eig(&sigma_x.sigma)?;
    let rank = eig.rank(DEFAULT_RANK_TOL);
    let total: f64 = eig.values.iter().map(|v| v * v).sum();
    println!("rank(Σ_X) = {rank}\n");
    println!("{:>4}  {:>12}  {:>12}", "s", "rel. error", "eigen-tail");
    for s in (1..=rank).filter(|s| s.is_power_of_two() || *s == rank) {
        let proj = optimal_projector_from(&post, &jac, s)?;
        let sub = epistemic_cov_subspace(&jac, &proj, &factor, lambda)?;
        let tail = (eig.values.iter().skip(s).map(|v| v * v).sum::<f64>() / total).sqrt();
        println!("{s:>4}  {:>12.3e}  {tail:>12.3e}", relative_error(&sigma_x, &sub)?);
    }
    Ok(())
}
