//! Epistemic predictive covariances and the resulting predictive
//! distributions (Gaussian for regression, probit-scaled softmax for
//! classification).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::curvature::CurvatureSource;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::linalg::{cholesky, symmetrize, DenseMatrix};
use crate::model::{Jacobian, Network};
use crate::posterior::{apply_psi_inv_quadform, PosteriorApprox};
use crate::subspace::Projector;
use crate::train::softmax;

/// Roundoff allowance for negative variances on the diagonal.
pub const NEGATIVE_VARIANCE_TOL: f64 = -1e-8;

/// `Σ ∈ ℝ^{nC×nC}` over the stacked outputs of `n` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpistemicCov {
    pub sigma: DenseMatrix,
    pub n: usize,
    pub c: usize,
}

impl EpistemicCov {
    pub fn new(sigma: DenseMatrix, c: usize) -> Result<Self> {
        if !sigma.is_square() || c == 0 || sigma.nrows() % c != 0 {
            return Err(Error::Dimension(format!(
                "covariance is {}x{}, expected nC x nC with C = {c}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("covariance has non-finite entries".into()));
        }
        Ok(Self {
            n: sigma.nrows() / c,
            c,
            sigma: symmetrize(&sigma),
        })
    }

    pub fn zeros(n: usize, c: usize) -> Self {
        Self {
            sigma: DenseMatrix::zeros(n * c, n * c),
            n,
            c,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.sigma.trace()
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.sigma.diagonal()
    }
}

/// `Σ_X = J_X Ψ J_Xᵀ`. Meant for the exact posterior, but any approximation
/// gives its own epistemic covariance.
pub fn epistemic_cov_full(jac: &Jacobian, post: &PosteriorApprox) -> Result<EpistemicCov> {
    if jac.params() != post.param_count() {
        return Err(Error::Dimension(format!(
            "Jacobian has {} columns, posterior has {} parameters",
            jac.params(),
            post.param_count()
        )));
    }
    let psi_jt = post.apply_psi(&jac.matrix.transpose())?;
    EpistemicCov::new(&jac.matrix * psi_jt, jac.c)
}

/// The pieces of `Σ_{P,X} = A K⁻¹ Aᵀ`: `A = J_X P` and `K⁻¹ Aᵀ`.
struct SubspaceSolve {
    a: DenseMatrix,
    k_inv_at: DenseMatrix,
}

fn subspace_solve(
    jac: &Jacobian,
    proj: &Projector,
    source: &dyn CurvatureSource,
    prior_precision: f64,
) -> Result<SubspaceSolve> {
    if jac.params() != proj.param_count() {
        return Err(Error::Dimension(format!(
            "Jacobian has {} columns, projector has {} rows",
            jac.params(),
            proj.param_count()
        )));
    }
    let k = apply_psi_inv_quadform(source, prior_precision, &proj.p)?;
    let a = &jac.matrix * &proj.p;
    // K is Gram-like; equilibrate before factorizing so badly scaled
    // projector columns don't cost accuracy.
    let d: Vec<f64> = k.diagonal().iter().map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()).collect();
    let scaled = DenseMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * d[i] * d[j]);
    let chol = cholesky(&scaled).map_err(|_| Error::Rank {
        requested: proj.s(),
        usable: proj.s().saturating_sub(1),
    })?;
    let mut at = a.transpose();
    for (i, mut row) in at.row_iter_mut().enumerate() {
        row *= d[i];
    }
    let mut k_inv_at = chol.solve(&at);
    for (i, mut row) in k_inv_at.row_iter_mut().enumerate() {
        row *= d[i];
    }
    Ok(SubspaceSolve { a, k_inv_at })
}

/// `Σ_{P,X} = J_X P (Pᵀ Ψ⁻¹ P)⁻¹ Pᵀ J_Xᵀ` with the exact GGN precision,
/// without forming `Ψ` or `Ψ⁻¹`.
pub fn epistemic_cov_subspace(
    jac: &Jacobian,
    proj: &Projector,
    source: &dyn CurvatureSource,
    prior_precision: f64,
) -> Result<EpistemicCov> {
    let solved = subspace_solve(jac, proj, source, prior_precision)?;
    EpistemicCov::new(solved.a * solved.k_inv_at, jac.c)
}

/// `Tr Σ_{P,X}` without materializing the `nC × nC` covariance.
pub fn subspace_trace(
    jac: &Jacobian,
    proj: &Projector,
    source: &dyn CurvatureSource,
    prior_precision: f64,
) -> Result<f64> {
    let solved = subspace_solve(jac, proj, source, prior_precision)?;
    Ok(solved.a.transpose().component_mul(&solved.k_inv_at).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPred {
    pub mean: DVector<f64>,
    pub total_cov: DenseMatrix,
    pub c: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPred {
    /// `n × C`, rows sum to one.
    pub probs: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictiveDist {
    Gaussian(GaussianPred),
    Categorical(CategoricalPred),
}

impl PredictiveDist {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        match self {
            PredictiveDist::Gaussian(g) => {
                out.push_str("sample,output,mean,variance\n");
                for k in 0..g.mean.len() {
                    writeln!(out, "{},{},{},{}", k / g.c, k % g.c, g.mean[k], g.total_cov[(k, k)]).unwrap();
                }
            }
            PredictiveDist::Categorical(c) => {
                let header: Vec<String> = (0..c.probs.ncols()).map(|j| format!("p{j}")).collect();
                writeln!(out, "sample,{}", header.join(",")).unwrap();
                for (i, row) in c.probs.row_iter().enumerate() {
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    writeln!(out, "{i},{}", cells.join(",")).unwrap();
                }
            }
        }
        write_atomic(path, out.as_bytes())
    }
}

fn check_shapes(net: &Network, x: &DenseMatrix, cov: &EpistemicCov) -> Result<()> {
    if cov.n != x.nrows() || cov.c != net.output_dim() {
        return Err(Error::Dimension(format!(
            "covariance covers {} samples x {} outputs, inputs give {} x {}",
            cov.n,
            cov.c,
            x.nrows(),
            net.output_dim()
        )));
    }
    Ok(())
}

/// `𝒩(f_θ̂(X), Σ + σ²𝟙)`.
pub fn predict_regression(net: &Network, x: &DenseMatrix, cov: &EpistemicCov, sigma: f64) -> Result<GaussianPred> {
    check_shapes(net, x, cov)?;
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::Argument(format!("noise scale must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 && cov.sigma.iter().all(|&v| v == 0.0) {
        return Err(Error::Argument(
            "zero noise and zero epistemic covariance give an improper distribution".into(),
        ));
    }
    let mean = net.forward(x)?;
    let mut total_cov = cov.sigma.clone();
    for i in 0..total_cov.nrows() {
        total_cov[(i, i)] += sigma * sigma;
    }
    Ok(GaussianPred {
        mean,
        total_cov,
        c: cov.c,
    })
}

/// Softmax of `z / √(1 + π/8 · diag Σ)` per sample.
pub fn predict_classification_probit(net: &Network, x: &DenseMatrix, cov: &EpistemicCov) -> Result<CategoricalPred> {
    check_shapes(net, x, cov)?;
    let logits = net.forward(x)?;
    let c = cov.c;
    let mut probs = DenseMatrix::zeros(cov.n, c);
    for i in 0..cov.n {
        let mut z = vec![0.0; c];
        for j in 0..c {
            let k = i * c + j;
            let mut var = cov.sigma[(k, k)];
            if var < 0.0 {
                if var < NEGATIVE_VARIANCE_TOL {
                    return Err(Error::Numeric(format!(
                        "negative predictive variance {var:e} at sample {i}, class {j}"
                    )));
                }
                var = 0.0;
            }
            z[j] = logits[k] / (1.0 + PI / 8.0 * var).sqrt();
        }
        for (j, p) in softmax(&z).into_iter().enumerate() {
            probs[(i, j)] = p;
        }
    }
    Ok(CategoricalPred { probs })
}
