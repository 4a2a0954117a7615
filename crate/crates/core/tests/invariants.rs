use lowrank_laplace::curvature::{curvature_factor, ggn_diag, kfac_factors, CurvatureFactor};
use lowrank_laplace::data::{synth_blobs, synth_friedman_like, Dataset};
use lowrank_laplace::io::{read_matrix, write_matrix};
use lowrank_laplace::linalg::DenseMatrix;
use lowrank_laplace::model::{Jacobian, Network, NetworkSpec};
use lowrank_laplace::posterior::PosteriorApprox;
use lowrank_laplace::predictive::{epistemic_cov_full, epistemic_cov_subspace};
use lowrank_laplace::subspace::{gauge_invariance_check, subset_projector, Projector, ProjectorKind};
use nalgebra::{DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

struct Problem {
    factor: CurvatureFactor,
    jac: Jacobian,
    data: Dataset,
    net: Network,
}

fn problem(classify: bool, seed: u64) -> Problem {
    let (net, data, eval) = if classify {
        (
            Network::init(NetworkSpec::new(vec![2, 6, 3]).unwrap(), seed),
            synth_blobs(30, 3, 2, 2.0, seed).unwrap(),
            synth_blobs(6, 3, 2, 2.0, seed + 1).unwrap(),
        )
    } else {
        (
            Network::init(NetworkSpec::new(vec![3, 6, 1]).unwrap(), seed),
            synth_friedman_like(30, 3, 0.2, seed).unwrap(),
            synth_friedman_like(8, 3, 0.2, seed + 1).unwrap(),
        )
    };
    let factor = curvature_factor(&net, &data).unwrap();
    let jac = net.jacobian(&eval.x).unwrap();
    Problem { factor, jac, data, net }
}

fn min_eig(m: &DenseMatrix) -> f64 {
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loewner_order_for_random_projectors(seed in 0u64..1000, s in 1usize..12, classify in any::<bool>()) {
        let pb = problem(classify, seed % 7);
        let p = pb.net.param_count();
        let proj = Projector::new(random_matrix(p, s, seed), ProjectorKind::LowrankKfac).unwrap();
        let full = epistemic_cov_full(&pb.jac, &PosteriorApprox::full(&pb.factor, 1.0).unwrap()).unwrap();
        let sub = epistemic_cov_subspace(&pb.jac, &proj, &pb.factor, 1.0).unwrap();
        let scale = full.trace() / full.dim() as f64;
        prop_assert!(min_eig(&(&full.sigma - &sub.sigma)) >= -1e-8 * scale);
        prop_assert!(sub.trace() <= full.trace() * (1.0 + 1e-8));
    }

    #[test]
    fn gauge_invariance_for_random_gauges(seed in 0u64..1000, s in 1usize..6) {
        let pb = problem(false, 3);
        let p = pb.net.param_count();
        let proj = Projector::new(random_matrix(p, s, seed), ProjectorKind::LowrankDiagonal).unwrap();
        let mut q = random_matrix(s, s, seed + 17);
        for k in 0..s {
            q[(k, k)] += 3.0;
        }
        let d = gauge_invariance_check(&proj, &q, |m| {
            let pr = Projector::new(m.clone(), ProjectorKind::LowrankDiagonal)?;
            Ok(epistemic_cov_subspace(&pb.jac, &pr, &pb.factor, 1.0)?.sigma)
        }).unwrap();
        prop_assert!(d <= 1e-7);
    }

    #[test]
    fn subset_selection_nests(scores in prop::collection::vec(-5.0f64..5.0, 2..40)) {
        let v = DVector::from_vec(scores);
        let mut prev: Vec<usize> = Vec::new();
        for s in 1..=v.len() {
            let idx = subset_projector(&v, s, ProjectorKind::SubsetMagnitude).unwrap().selected_indices().unwrap();
            prop_assert_eq!(&idx[..s - 1], &prev[..]);
            prev = idx;
        }
    }

    #[test]
    fn matrix_files_round_trip(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = random_matrix(rows, cols, seed);
        write_matrix(&path, &m).unwrap();
        prop_assert_eq!(read_matrix(&path).unwrap(), m);
    }

    #[test]
    fn psi_and_inverse_are_inverse(seed in 0u64..50, lambda in 0.1f64..10.0) {
        let pb = problem(seed % 2 == 0, seed);
        let p = pb.net.param_count();
        let m = random_matrix(p, 3, seed);
        let posts = [
            PosteriorApprox::full(&pb.factor, lambda).unwrap(),
            PosteriorApprox::diagonal(&ggn_diag(&pb.factor).unwrap(), lambda).unwrap(),
            PosteriorApprox::kfac(&kfac_factors(&pb.net, &pb.data).unwrap(), lambda).unwrap(),
        ];
        for post in &posts {
            let back = post.apply_psi_inv(&post.apply_psi(&m).unwrap()).unwrap();
            prop_assert!((back - &m).norm() <= 1e-8 * m.norm());
        }
    }
}

#[test]
fn projector_and_curvature_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pb = problem(true, 1);
    let cpath = dir.path().join("curvature.bin");
    pb.factor.save(&cpath).unwrap();
    assert_eq!(CurvatureFactor::load(&cpath).unwrap(), pb.factor);

    let proj = Projector::new(random_matrix(pb.net.param_count(), 4, 2), ProjectorKind::LowrankKfac).unwrap();
    let ppath = dir.path().join("projector.bin");
    proj.save(&ppath).unwrap();
    assert_eq!(Projector::load(&ppath).unwrap(), proj);

    // a projector file is not a curvature file
    assert!(CurvatureFactor::load(&ppath).is_err());
}

#[test]
fn truncated_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    write_matrix(&path, &random_matrix(3, 3, 0)).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert!(read_matrix(&path).is_err());
}
