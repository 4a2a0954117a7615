//! Fisher, GGN and Hessian for a small classifier.
//!
//! For softmax likelihoods the Fisher information equals the GGN, so a
//! Monte-Carlo Fisher estimate converges to `V Vᵀ`. The finite-difference
//! loss Hessian differs from the GGN by the residual term.

use lowrank_laplace::curvature::{curvature_factor, loss_hessian_fd, residual_term_fd};
use lowrank_laplace::data::synth_blobs;
use lowrank_laplace::linalg::{frob_norm, DenseMatrix};
use lowrank_laplace::model::{Network, NetworkSpec};
use lowrank_laplace::train::softmax;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let net = Network::init(NetworkSpec::new(vec![2, 4, 3])?, 7);
    let data = synth_blobs(30, 3, 2, 1.5, 8)?;
    let v = curvature_factor(&net, &data)?.v;
    let ggn = &v * v.transpose();
    let jac = net.jacobian(&data.x)?;
    let n = data.len();
    let p = net.param_count();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for draws in [1_000, 10_000, 100_000] {
        let mut fisher = DenseMatrix::zeros(p, p);
        for _ in 0..draws {
            let i = rng.random_range(0..n);
            let phi = softmax(&net.forward_sample(data.x.row(i).transpose().as_slice()));
            let u: f64 = rng.random();
            let y = phi.iter().scan(0.0, |acc, q| { *acc += q; Some(*acc) }).position(|c| u <= c).unwrap_or(2);
            let r: Vec<f64> = (0..3).map(|c| phi[c] - if c == y { 1.0 } else { 0.0 }).collect();
            let g = jac.matrix.rows(i * 3, 3).transpose() * nalgebra::DVector::from_vec(r);
            fisher.ger(n as f64 / draws as f64, &g, &g, 1.0);
        }
        println!("{draws:>7} draws: ‖F_mc − GGN‖/‖GGN‖ = {:.3}", frob_norm(&(fisher - &ggn)) / frob_norm(&ggn));
    }

    let lambda = 1.0;
    let hessian = loss_hessian_fd(&net, &data, lambda)?;
    let residual = residual_term_fd(&net, &data)?;
    let ggn_prior = &ggn + DenseMatrix::identity(p, p) * lambda;
    println!(
        "‖H − (GGN + λ𝟙)‖/‖H‖ = {:.3e}, after adding the residual term: {:.3e}",
        frob_norm(&(&hessian - &ggn_prior)) / frob_norm(&hessian),
        frob_norm(&(&hessian - ggn_prior - residual)) / frob_norm(&hessian)
    );
    Ok(())
}
