//! All projector families side by side on a three-class problem.
//!
//! Subset projectors keep the `s` parameters with the largest magnitude,
//! diagonal-posterior variance or SWAG variance; low-rank projectors use a
//! diagonal or KFAC posterior on a construction subset, and the optimal one
//! uses the exact posterior on the evaluation inputs. The trace column
//! needs no reference covariance, which is what makes it usable in practice.
//!
//! Subset-diagonal tends to pick parameters the output ignores: their
//! posterior variance stays at the prior `1/λ`, the largest possible.

use lowrank_laplace::curvature::{curvature_factor, ggn_diag, kfac_factors};
use lowrank_laplace::data::{split_and_subset, synth_blobs, SplitConfig};
use lowrank_laplace::metrics::relative_error;
use lowrank_laplace::model::{Network, NetworkSpec};
use lowrank_laplace::posterior::PosteriorApprox;
use lowrank_laplace::predictive::{epistemic_cov_full, epistemic_cov_subspace};
use lowrank_laplace::subspace::{subset_projector, LowrankBasis, ProjectorKind, DEFAULT_RANK_TOL};
use lowrank_laplace::train::{run_swag, train_map, SwagConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let data = synth_blobs(250, 3, 2, 2.0, 0)?;
    let split = split_and_subset(&data, &SplitConfig::with_defaults(data.len(), 0.8, data.task, 0))?;
    let net = Network::init(NetworkSpec::new(vec![2, 16, 16, 3])?, 0);
    let net = train_map(&net, &split.train, &TrainConfig::default(), None)?.net;

    let lambda = 1.0;
    let factor = curvature_factor(&net, &split.train)?;
    let full = PosteriorApprox::full(&factor, lambda)?;
    let diag = PosteriorApprox::diagonal(&ggn_diag(&factor)?, lambda)?;
    let kfac = PosteriorApprox::kfac(&kfac_factors(&net, &split.train)?, lambda)?;
    let swag = SwagConfig::per_epoch(50, 1e-2, 32, split.train.len(), 1);
    let swag_var = run_swag(&net, &split.train, &swag, lambda)?.variance();

    let jac_eval = net.jacobian(&split.eval.x)?;
    let jac_cons = net.jacobian(&split.construction.x)?;
    let sigma_x = epistemic_cov_full(&jac_eval, &full)?;

    let bases = [
        (ProjectorKind::LowrankDiagonal, LowrankBasis::new(&diag, &jac_cons, DEFAULT_RANK_TOL)?),
        (ProjectorKind::LowrankKfac, LowrankBasis::new(&kfac, &jac_cons, DEFAULT_RANK_TOL)?),
        (ProjectorKind::LowrankOptGgn, LowrankBasis::new(&full, &jac_eval, DEFAULT_RANK_TOL)?),
    ];
    let scores = [
        (ProjectorKind::SubsetMagnitude, net.theta.abs()),
        (ProjectorKind::SubsetDiagonal, diag.variance_diag()?),
        (ProjectorKind::SubsetSwag, swag_var),
    ];

    println!("Tr Σ_X = {:.4e}", sigma_x.trace());
    for s in [1, 5, 10, 50] {
        println!("\ns = {s}");
        let mut projectors = Vec::new();
        for (kind, sc) in &scores {
            projectors.push(subset_projector(sc, s, *kind)?);
        }
        for (kind, basis) in &bases {
            match basis.projector(s, *kind) {
                Ok(p) => projectors.push(p),
                Err(e) => println!("  {kind:<18} skipped: {e}"),
            }
        }
        for proj in projectors {
            let cov = epistemic_cov_subspace(&jac_eval, &proj, &factor, lambda)?;
            println!(
                "  {:<18} rel. error {:>8.4}   trace {:>10.4e}",
                proj.kind.name(),
                relative_error(&sigma_x, &cov)?,
                cov.trace()
            );
        }
    }
    Ok(())
}
