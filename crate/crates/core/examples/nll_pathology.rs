//! Why the NLL is a poor yardstick for epistemic uncertainty.
//!
//! Adds a scalar epistemic variance to a Gaussian predictive. With the true
//! label noise the NLL is minimized at `MSE_test − σ²`; with the noise
//! estimated from training residuals the minimum sits at (about) zero, so
//! the NLL rewards *less* uncertainty regardless of model quality.

use lowrank_laplace::data::{synth_sincos, Targets};
use lowrank_laplace::linalg::DenseMatrix;
use lowrank_laplace::metrics::nll_diagonal;
use lowrank_laplace::model::{Network, NetworkSpec};
use lowrank_laplace::predictive::{predict_regression, EpistemicCov, PredictiveDist};
use lowrank_laplace::train::{estimate_sigma, train_map, TrainConfig};

fn main() -> anyhow::Result<()> {
    let sigma = 0.1;
    let train = synth_sincos(1000, sigma, (-10.0, 10.0), 1)?;
    let test = synth_sincos(500, sigma, (-10.0, 10.0), 2)?;
    let cfg = TrainConfig {
        epochs: 300,
        lr: 1e-4,
        ..TrainConfig::default()
    };
    let net = train_map(&Network::init(NetworkSpec::new(vec![1, 8, 1])?, 3), &train, &cfg, None)?.net;
    let sigma_hat = estimate_sigma(&net, &train)?;

    let f = net.forward(&test.x)?;
    let Targets::Real(y) = &test.y else { unreachable!() };
    let mse = (0..test.len()).map(|i| (f[i] - y[(i, 0)]).powi(2)).sum::<f64>() / test.len() as f64;
    println!("MSE_test = {mse:.4}, σ = {sigma}, σ̂ = {sigma_hat:.4}");
    println!("predicted minimizer with σ: {:.4}\n", mse - sigma * sigma);

    println!("{:>8}  {:>10}  {:>10}", "Σ", "NLL(σ)", "NLL(σ̂)");
    for k in 0..=10 {
        let extra = 0.03 * k as f64;
        let cov = EpistemicCov::new(DenseMatrix::identity(test.len(), test.len()) * extra, 1)?;
        let at = |noise: f64| -> anyhow::Result<f64> {
            let pred = PredictiveDist::Gaussian(predict_regression(&net, &test.x, &cov, noise)?);
            Ok(nll_diagonal(&pred, &test.y)?)
        };
        println!("{extra:>8.3}  {:>10.4}  {:>10.4}", at(sigma)?, at(sigma_hat)?);
    }
    Ok(())
}
