//! Per-sample parameter Jacobians of an MLP, checked by finite differences.
//!
//! The check uses random biases: with the zero biases of `Network::init` a
//! sample whose first layer is fully inactive sits exactly on the ReLU kink
//! of the next layer, where central differences average the two slopes.

use lowrank_laplace::linalg::DenseMatrix;
use lowrank_laplace::model::{jacobian_rank, Network, NetworkSpec};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let spec = NetworkSpec::new(vec![3, 10, 10, 2])?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = Network::init(spec.clone(), 0).param_count();
    let net = Network::init(spec, 0).with_theta(DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)));

    let x = DenseMatrix::from_row_slice(4, 3, &[0.1, -0.4, 1.2, 0.8, 0.3, -0.5, -1.0, 0.2, 0.0, 0.4, 0.9, -0.7]);
    let jac = net.jacobian(&x)?;
    println!("J is {} x {} (n·C x p)", jac.rows(), jac.params());

    let h = 1e-6;
    let mut worst = 0.0_f64;
    for j in 0..p {
        let (mut up, mut down) = (net.theta.clone(), net.theta.clone());
        up[j] += h;
        down[j] -= h;
        let diff = (net.with_theta(up).forward(&x)? - net.with_theta(down).forward(&x)?) / (2.0 * h);
        for r in 0..jac.rows() {
            worst = worst.max((diff[r] - jac.matrix[(r, j)]).abs());
        }
    }
    println!("max |J − J_fd| = {worst:.2e}");
    println!("rank(J) = {}", jacobian_rank(&jac, 1e-10));
    Ok(())
}
