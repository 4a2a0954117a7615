//! Laplace posterior covariance `Ψ` and its structured approximations.
//!
//! Every variant represents a precision `Ψ⁻¹ = curvature + λ·𝟙` and exposes
//! products with `Ψ`. The KFAC variant is inverted exactly in the
//! Kronecker eigenbasis: with `G̃ = Q_G diag(g) Q_Gᵀ` and
//! `Ã = Q_A diag(a) Q_Aᵀ`, the damped block `G̃ ⊗ Ã + λ𝟙` has eigenvalues
//! `g_r a_t + λ`.

use nalgebra::{Cholesky, DVector, Dyn};

use crate::curvature::{CurvatureFactor, CurvatureSource, KfacFactors, DENSE_PARAM_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{capacity_guard, cholesky, symmetrize, sym_eig, DenseMatrix};
use crate::model::LayerShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorKind {
    Full,
    Diagonal,
    Kfac,
}

#[derive(Debug, Clone)]
pub struct KfacBlock {
    pub shape: LayerShape,
    pub a_vectors: DenseMatrix,
    pub a_values: DVector<f64>,
    pub g_vectors: DenseMatrix,
    pub g_values: DVector<f64>,
}

impl KfacBlock {
    fn width(&self) -> usize {
        self.shape.fan_in + 1
    }

    fn param_index(&self, o: usize, i: usize) -> usize {
        if i == self.shape.fan_in {
            self.shape.bias_index(o)
        } else {
            self.shape.weight_index(o, i)
        }
    }

    /// Applies `(G̃⊗Ã + λ𝟙)^power` (power ±1) to one column, in place.
    fn apply(&self, col: &mut [f64], prior_precision: f64, inverse: bool) {
        let (out, width) = (self.shape.fan_out, self.width());
        let x = DenseMatrix::from_fn(out, width, |o, i| col[self.param_index(o, i)]);
        let mut rotated = self.g_vectors.transpose() * x * &self.a_vectors;
        for o in 0..out {
            for i in 0..width {
                let ev = self.g_values[o] * self.a_values[i] + prior_precision;
                if inverse {
                    rotated[(o, i)] /= ev;
                } else {
                    rotated[(o, i)] *= ev;
                }
            }
        }
        let back = &self.g_vectors * rotated * self.a_vectors.transpose();
        for o in 0..out {
            for i in 0..width {
                col[self.param_index(o, i)] = back[(o, i)];
            }
        }
    }

    fn covariance_diag(&self, prior_precision: f64, out_diag: &mut DVector<f64>) {
        let (out, width) = (self.shape.fan_out, self.width());
        for o in 0..out {
            for i in 0..width {
                let mut acc = 0.0;
                for r in 0..out {
                    let qg = self.g_vectors[(o, r)].powi(2);
                    for t in 0..width {
                        let qa = self.a_vectors[(i, t)].powi(2);
                        acc += qg * qa / (self.g_values[r] * self.a_values[t] + prior_precision);
                    }
                }
                out_diag[self.param_index(o, i)] = acc;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum PosteriorApprox {
    Full {
        precision: DenseMatrix,
        factor: Cholesky<f64, Dyn>,
        prior_precision: f64,
    },
    Diagonal {
        precision: DVector<f64>,
        prior_precision: f64,
    },
    Kfac {
        blocks: Vec<KfacBlock>,
        param_count: usize,
        prior_precision: f64,
    },
}

fn check_prior(prior_precision: f64) -> Result<()> {
    if prior_precision > 0.0 && prior_precision.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "prior precision must be positive, got {prior_precision}"
        )))
    }
}

impl PosteriorApprox {
    /// `Ψ⁻¹ = V Vᵀ + λ𝟙`, materialized.
    pub fn full(factor: &CurvatureFactor, prior_precision: f64) -> Result<Self> {
        check_prior(prior_precision)?;
        let p = factor.v.nrows();
        capacity_guard("dense posterior parameters", p, DENSE_PARAM_LIMIT)?;
        let mut precision = &factor.v * factor.v.transpose();
        for k in 0..p {
            precision[(k, k)] += prior_precision;
        }
        Self::from_precision(precision, prior_precision)
    }

    /// Wraps a dense precision matrix (curvature already plus `λ𝟙`).
    pub fn from_precision(precision: DenseMatrix, prior_precision: f64) -> Result<Self> {
        check_prior(prior_precision)?;
        let precision = symmetrize(&precision);
        let factor = cholesky(&precision)?;
        Ok(Self::Full {
            precision,
            factor,
            prior_precision,
        })
    }

    /// `Ψ⁻¹ = diag(curvature_diag) + λ𝟙`.
    pub fn diagonal(curvature_diag: &DVector<f64>, prior_precision: f64) -> Result<Self> {
        check_prior(prior_precision)?;
        if curvature_diag.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Numeric("diagonal curvature must be finite and >= 0".into()));
        }
        Ok(Self::Diagonal {
            precision: curvature_diag.add_scalar(prior_precision),
            prior_precision,
        })
    }

    pub fn kfac(factors: &KfacFactors, prior_precision: f64) -> Result<Self> {
        check_prior(prior_precision)?;
        let scale = (factors.n.max(1) as f64).sqrt();
        let mut blocks = Vec::with_capacity(factors.layers.len());
        let mut param_count = 0;
        for layer in &factors.layers {
            let a = sym_eig(&(&layer.a / scale))?;
            let g = sym_eig(&(&layer.g / scale))?;
            // factors are Gram matrices; clip roundoff below zero
            blocks.push(KfacBlock {
                shape: layer.shape,
                a_values: a.values.map(|v| v.max(0.0)),
                a_vectors: a.vectors,
                g_values: g.values.map(|v| v.max(0.0)),
                g_vectors: g.vectors,
            });
            param_count += layer.shape.param_count();
        }
        Ok(Self::Kfac {
            blocks,
            param_count,
            prior_precision,
        })
    }

    pub fn kind(&self) -> PosteriorKind {
        match self {
            Self::Full { .. } => PosteriorKind::Full,
            Self::Diagonal { .. } => PosteriorKind::Diagonal,
            Self::Kfac { .. } => PosteriorKind::Kfac,
        }
    }

    pub fn prior_precision(&self) -> f64 {
        match self {
            Self::Full { prior_precision, .. }
            | Self::Diagonal { prior_precision, .. }
            | Self::Kfac { prior_precision, .. } => *prior_precision,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::Full { precision, .. } => precision.nrows(),
            Self::Diagonal { precision, .. } => precision.len(),
            Self::Kfac { param_count, .. } => *param_count,
        }
    }

    fn check_rows(&self, m: &DenseMatrix) -> Result<()> {
        if m.nrows() != self.param_count() {
            return Err(Error::Dimension(format!(
                "operand has {} rows, posterior has {} parameters",
                m.nrows(),
                self.param_count()
            )));
        }
        Ok(())
    }

    fn apply_power(&self, m: &DenseMatrix, inverse: bool) -> Result<DenseMatrix> {
        self.check_rows(m)?;
        Ok(match self {
            Self::Full {
                precision, factor, ..
            } => {
                if inverse {
                    factor.solve(m)
                } else {
                    precision * m
                }
            }
            Self::Diagonal { precision, .. } => {
                let mut out = m.clone();
                for (mut r, d) in out.row_iter_mut().zip(precision.iter()) {
                    if inverse {
                        r /= *d;
                    } else {
                        r *= *d;
                    }
                }
                out
            }
            Self::Kfac {
                blocks,
                prior_precision,
                ..
            } => {
                let mut out = m.clone();
                for mut col in out.column_iter_mut() {
                    let slice = col.as_mut_slice();
                    for block in blocks {
                        block.apply(slice, *prior_precision, inverse);
                    }
                }
                out
            }
        })
    }

    /// `Ψ · M`.
    pub fn apply_psi(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply_power(m, true)
    }

    /// `Ψ⁻¹ · M`.
    pub fn apply_psi_inv(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply_power(m, false)
    }

    /// Diagonal of `Ψ`.
    pub fn variance_diag(&self) -> Result<DVector<f64>> {
        match self {
            Self::Full { factor, .. } => Ok(factor.inverse().diagonal()),
            Self::Diagonal { precision, .. } => Ok(precision.map(|d| 1.0 / d)),
            Self::Kfac {
                blocks,
                param_count,
                prior_precision,
            } => {
                let mut diag = DVector::zeros(*param_count);
                for b in blocks {
                    b.covariance_diag(*prior_precision, &mut diag);
                }
                Ok(diag)
            }
        }
    }
}

pub fn posterior_variance_diag(post: &PosteriorApprox) -> Result<DVector<f64>> {
    post.variance_diag()
}

pub fn apply_psi(post: &PosteriorApprox, m: &DenseMatrix) -> Result<DenseMatrix> {
    post.apply_psi(m)
}

/// `Pᵀ Ψ⁻¹ P = (VᵀP)ᵀ(VᵀP) + λ PᵀP` for the exact GGN precision, accumulated
/// over column blocks of `V` without forming `V Vᵀ`.
pub fn apply_psi_inv_quadform(
    source: &dyn CurvatureSource,
    prior_precision: f64,
    p_mat: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_prior(prior_precision)?;
    if p_mat.nrows() != source.param_count() {
        return Err(Error::Dimension(format!(
            "projector has {} rows, curvature has {} parameters",
            p_mat.nrows(),
            source.param_count()
        )));
    }
    let mut k = p_mat.transpose() * p_mat * prior_precision;
    source.for_each_block(512, &mut |block| {
        let vp = block.transpose() * p_mat;
        k.gemm_tr(1.0, &vp, &vp, 1.0);
    })?;
    Ok(symmetrize(&k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{curvature_factor, ggn_diag, ggn_full, kfac_factors};
    use crate::data::{synth_blobs, synth_friedman_like, Targets};
    use crate::linalg::frob_norm;
    use crate::model::{Network, NetworkSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn tiny() -> (Network, crate::data::Dataset) {
        let net = Network::init(NetworkSpec::new(vec![2, 5, 3]).unwrap(), 2);
        let data = synth_blobs(25, 3, 2, 2.0, 3).unwrap();
        (net, data)
    }

    #[test]
    fn prior_only_posterior_is_identity() {
        let f = CurvatureFactor::from_matrix(DenseMatrix::zeros(4, 6), 2).unwrap();
        let post = PosteriorApprox::full(&f, 1.0).unwrap();
        let m = random(4, 3, 1);
        assert!(frob_norm(&(post.apply_psi(&m).unwrap() - &m)) < 1e-15);
    }

    #[test]
    fn diagonal_scalar_inversion() {
        let post = PosteriorApprox::diagonal(&DVector::from_vec(vec![1.0, 4.0]), 1.0).unwrap();
        let var = post.variance_diag().unwrap();
        assert_eq!(var.as_slice(), &[0.5, 0.2]);

        let single = PosteriorApprox::diagonal(&DVector::from_vec(vec![3.0]), 1.0).unwrap();
        let out = single.apply_psi(&DenseMatrix::from_element(1, 1, 8.0)).unwrap();
        assert_eq!(out[(0, 0)], 2.0);
    }

    #[test]
    fn full_inverse_consistency() {
        let (net, data) = tiny();
        let f = curvature_factor(&net, &data).unwrap();
        let post = PosteriorApprox::full(&f, 1.0).unwrap();
        let p = net.param_count();
        let eye = DenseMatrix::identity(p, p);
        let psi = post.apply_psi(&eye).unwrap();
        let back = post.apply_psi_inv(&psi).unwrap();
        assert!(frob_norm(&(back - &eye)) < 1e-8);

        let dense_inv = (ggn_full(&f).unwrap() + &eye).try_inverse().unwrap();
        let var = post.variance_diag().unwrap();
        for k in 0..p {
            assert!((var[k] - dense_inv[(k, k)]).abs() < 1e-8);
            assert!(var[k] > 0.0);
        }
    }

    #[test]
    fn round_trip_all_kinds() {
        let (net, data) = tiny();
        let f = curvature_factor(&net, &data).unwrap();
        let posts = [
            PosteriorApprox::full(&f, 0.5).unwrap(),
            PosteriorApprox::diagonal(&ggn_diag(&f).unwrap(), 0.5).unwrap(),
            PosteriorApprox::kfac(&kfac_factors(&net, &data).unwrap(), 0.5).unwrap(),
        ];
        let m = random(net.param_count(), 4, 7);
        for post in &posts {
            let back = post.apply_psi(&post.apply_psi_inv(&m).unwrap()).unwrap();
            assert!(frob_norm(&(back - &m)) <= 1e-6 * frob_norm(&m), "{:?}", post.kind());
            // vᵀΨ⁻¹v ≥ λ‖v‖²
            let pm = post.apply_psi_inv(&m).unwrap();
            for j in 0..m.ncols() {
                let q = m.column(j).dot(&pm.column(j));
                assert!(q >= 0.5 * m.column(j).norm_squared() * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn kfac_single_layer_matches_full() {
        let net = Network::init(NetworkSpec::new(vec![3, 2]).unwrap(), 4);
        let mut data = synth_friedman_like(25, 3, 0.1, 3).unwrap();
        data.y = Targets::Real(DenseMatrix::zeros(25, 2));
        let data = data.with_sigma(0.5);
        let full = PosteriorApprox::full(&curvature_factor(&net, &data).unwrap(), 1.0).unwrap();
        let kfac = PosteriorApprox::kfac(&kfac_factors(&net, &data).unwrap(), 1.0).unwrap();
        let m = random(net.param_count(), 3, 2);
        let a = full.apply_psi(&m).unwrap();
        let b = kfac.apply_psi(&m).unwrap();
        assert!(frob_norm(&(&a - &b)) <= 1e-6 * frob_norm(&a));
        let da = full.variance_diag().unwrap();
        let db = kfac.variance_diag().unwrap();
        assert!((da - db).abs().max() < 1e-10);
    }

    #[test]
    fn all_kinds_reduce_to_prior_without_data_term() {
        let (net, data) = tiny();
        let lambda = 2.5;
        let p = net.param_count();
        let zero_factor = CurvatureFactor::from_matrix(DenseMatrix::zeros(p, 3), 3).unwrap();
        let mut kfac = kfac_factors(&net, &data).unwrap();
        for layer in &mut kfac.layers {
            layer.g.fill(0.0);
        }
        let posts = [
            PosteriorApprox::full(&zero_factor, lambda).unwrap(),
            PosteriorApprox::diagonal(&DVector::zeros(p), lambda).unwrap(),
            PosteriorApprox::kfac(&kfac, lambda).unwrap(),
        ];
        let m = random(p, 2, 3);
        for post in &posts {
            let out = post.apply_psi(&m).unwrap();
            assert!(frob_norm(&(out - &m / lambda)) < 1e-12, "{:?}", post.kind());
        }
    }

    #[test]
    fn quadform_matches_dense() {
        let (net, data) = tiny();
        let f = curvature_factor(&net, &data).unwrap();
        let p = net.param_count();
        let proj = random(p, 4, 9);
        let k = apply_psi_inv_quadform(&f, 0.7, &proj).unwrap();
        let dense = proj.transpose() * (ggn_full(&f).unwrap() + DenseMatrix::identity(p, p) * 0.7) * &proj;
        assert!(frob_norm(&(&k - &dense)) <= 1e-10 * frob_norm(&dense));
        assert!(frob_norm(&(&k - k.transpose())) <= 1e-12 * frob_norm(&k));

        let mut e1 = DenseMatrix::zeros(p, 1);
        e1[(0, 0)] = 1.0;
        let k1 = apply_psi_inv_quadform(&f, 0.7, &e1).unwrap();
        let expected: f64 = f.v.row(0).iter().map(|v| v * v).sum::<f64>() + 0.7;
        assert!((k1[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn quadform_prior_only_orthonormal() {
        let f = CurvatureFactor::from_matrix(DenseMatrix::zeros(5, 2), 1).unwrap();
        let q = DenseMatrix::identity(5, 3);
        let k = apply_psi_inv_quadform(&f, 1.0, &q).unwrap();
        assert_eq!(k, DenseMatrix::identity(3, 3));
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = CurvatureFactor::from_matrix(DenseMatrix::zeros(3, 1), 1).unwrap();
        assert!(PosteriorApprox::full(&f, 0.0).is_err());
        let post = PosteriorApprox::full(&f, 1.0).unwrap();
        assert!(matches!(
            post.apply_psi(&DenseMatrix::zeros(4, 1)),
            Err(Error::Dimension(_))
        ));
    }
}
