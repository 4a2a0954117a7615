use lowrank_laplace::curvature::{curvature_factor, loss_hessian_fd, residual_term_fd};
use lowrank_laplace::data::{synth_blobs, synth_sincos};
use lowrank_laplace::linalg::DenseMatrix;
use lowrank_laplace::model::{Network, NetworkSpec};
use lowrank_laplace::train::{train_map, TrainConfig};

fn frob(m: &DenseMatrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// Hessian = GGN + residual term + prior, for a nonlinear net away from the MAP.
#[test]
fn hessian_splits_into_ggn_and_residual() {
    for (net, data) in [
        (
            Network::init(NetworkSpec::new(vec![1, 5, 1]).unwrap(), 3),
            synth_sincos(25, 0.3, (-2.0, 2.0), 4).unwrap(),
        ),
        (
            Network::init(NetworkSpec::new(vec![2, 4, 3]).unwrap(), 5),
            synth_blobs(25, 3, 2, 1.5, 6).unwrap(),
        ),
    ] {
        let lambda = 0.5;
        let p = net.param_count();
        let v = curvature_factor(&net, &data).unwrap().v;
        let ggn = &v * v.transpose();
        let hessian = loss_hessian_fd(&net, &data, lambda).unwrap();
        let residual = residual_term_fd(&net, &data).unwrap();
        let rebuilt = &ggn + &residual + DenseMatrix::identity(p, p) * lambda;
        let rel = frob(&(&hessian - rebuilt)) / frob(&hessian);
        assert!(rel < 1e-4, "relative mismatch {rel:e}");
        // the residual is what separates the two for a nonlinear model
        assert!(frob(&residual) > 1e-6 * frob(&ggn));
    }
}

// Near a well-fit MAP, the GGN approximates the Hessian better than at init.
#[test]
fn residual_shrinks_after_training() {
    let data = synth_sincos(40, 0.05, (-2.0, 2.0), 8).unwrap();
    let init = Network::init(NetworkSpec::new(vec![1, 8, 1]).unwrap(), 9);
    let trained = train_map(
        &init,
        &data,
        &TrainConfig {
            epochs: 2000,
            lr: 5e-3,
            ..TrainConfig::default()
        },
        None,
    )
    .unwrap()
    .net;
    let ratio = |net: &Network| {
        let v = curvature_factor(net, &data).unwrap().v;
        frob(&residual_term_fd(net, &data).unwrap()) / frob(&(&v * v.transpose()))
    };
    assert!(ratio(&trained) < ratio(&init));
}
