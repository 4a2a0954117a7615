//! Projectors `P ∈ ℝ^{p×s}` defining affine subspace models `θ = θ̂ + Pμ`.
//!
//! Subset projectors pick coordinates by a score. Low-rank projectors take
//! the dominant eigenvectors `U_s` of `J Ψ Jᵀ` for some posterior `Ψ` and set
//! `P = Ψ Jᵀ U_s`. With the exact GGN posterior and the evaluation inputs this
//! is the optimal projector: the subspace covariance then equals the best
//! rank-`s` approximation `U_s Λ_s U_sᵀ` of the full epistemic covariance.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureFactor;
use crate::error::{Error, Result};
use crate::io::{self, Reader, PROJECTOR_MAGIC};
use crate::linalg::{frob_norm, sym_eig, DenseMatrix};
use crate::model::Jacobian;
use crate::posterior::{PosteriorApprox, PosteriorKind};

/// Default relative eigenvalue tolerance for the usable subspace dimension.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProjectorKind {
    #[serde(rename = "subset-magnitude")]
    SubsetMagnitude,
    #[serde(rename = "subset-diagonal")]
    SubsetDiagonal,
    #[serde(rename = "subset-swag")]
    SubsetSwag,
    #[serde(rename = "lowrank-diagonal")]
    LowrankDiagonal,
    #[serde(rename = "lowrank-kfac")]
    LowrankKfac,
    #[serde(rename = "lowrankopt-ggn")]
    LowrankOptGgn,
    #[serde(rename = "none-full")]
    Full,
}

impl ProjectorKind {
    pub const ALL: [ProjectorKind; 7] = [
        ProjectorKind::SubsetMagnitude,
        ProjectorKind::SubsetDiagonal,
        ProjectorKind::SubsetSwag,
        ProjectorKind::LowrankDiagonal,
        ProjectorKind::LowrankKfac,
        ProjectorKind::LowrankOptGgn,
        ProjectorKind::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SubsetMagnitude => "subset-magnitude",
            Self::SubsetDiagonal => "subset-diagonal",
            Self::SubsetSwag => "subset-swag",
            Self::LowrankDiagonal => "lowrank-diagonal",
            Self::LowrankKfac => "lowrank-kfac",
            Self::LowrankOptGgn => "lowrankopt-ggn",
            Self::Full => "none-full",
        }
    }

    pub fn is_subset(self) -> bool {
        matches!(
            self,
            Self::SubsetMagnitude | Self::SubsetDiagonal | Self::SubsetSwag
        )
    }

    /// Posterior approximation a low-rank kind is built from.
    pub fn posterior_kind(self) -> Option<PosteriorKind> {
        match self {
            Self::LowrankDiagonal => Some(PosteriorKind::Diagonal),
            Self::LowrankKfac => Some(PosteriorKind::Kfac),
            Self::LowrankOptGgn => Some(PosteriorKind::Full),
            _ => None,
        }
    }
}

impl fmt::Display for ProjectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProjectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown projector kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub p: DenseMatrix,
    pub kind: ProjectorKind,
}

impl Projector {
    /// Validates full column rank: after scaling columns to unit norm, the
    /// smallest eigenvalue of `PᵀP` must exceed `1e-12` times the largest.
    pub fn new(p: DenseMatrix, kind: ProjectorKind) -> Result<Self> {
        if p.ncols() == 0 || p.ncols() > p.nrows() {
            return Err(Error::Argument(format!(
                "projector must be p x s with 1 <= s <= p, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("projector has non-finite entries".into()));
        }
        let mut unit = p.clone();
        for mut col in unit.column_iter_mut() {
            let norm = col.norm();
            if norm == 0.0 {
                return Err(Error::Rank {
                    requested: p.ncols(),
                    usable: p.ncols() - 1,
                });
            }
            col /= norm;
        }
        let gram = sym_eig(&(unit.transpose() * &unit))?;
        let usable = gram.rank(1e-12);
        if usable < p.ncols() {
            return Err(Error::Rank {
                requested: p.ncols(),
                usable,
            });
        }
        Ok(Self { p, kind })
    }

    pub fn s(&self) -> usize {
        self.p.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.p.nrows()
    }

    /// Selected parameter indices for subset kinds, in column order.
    pub fn selected_indices(&self) -> Option<Vec<usize>> {
        if !self.kind.is_subset() {
            return None;
        }
        Some(
            self.p
                .column_iter()
                .map(|c| c.iter().position(|&v| v == 1.0).unwrap())
                .collect(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(PROJECTOR_MAGIC);
        let tag = self.kind.name().as_bytes();
        buf.extend_from_slice(&(tag.len() as u32).to_le_bytes());
        buf.extend_from_slice(tag);
        io::encode_matrix(&self.p, &mut buf);
        io::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io::read_all(path)?;
        let mut r = Reader::new(&bytes);
        r.magic(PROJECTOR_MAGIC)?;
        let len = r.u32()? as usize;
        let tag = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Format(format!("projector tag is not UTF-8: {e}")))?;
        let kind: ProjectorKind = tag.parse()?;
        let p = r.matrix()?;
        r.finish()?;
        Ok(Self { p, kind })
    }
}

/// Canonical basis vectors of the `s` largest scores; ties go to the lower
/// parameter index.
pub fn subset_projector(scores: &DVector<f64>, s: usize, kind: ProjectorKind) -> Result<Projector> {
    let p = scores.len();
    if s == 0 || s > p {
        return Err(Error::Argument(format!("subset size s = {s} outside 1..={p}")));
    }
    if !kind.is_subset() {
        return Err(Error::Argument(format!("{kind} is not a subset projector kind")));
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("subset scores contain NaN".into()));
    }
    let order = ranked_indices(scores);
    let mut mat = DenseMatrix::zeros(p, s);
    for (col, &idx) in order.iter().take(s).enumerate() {
        mat[(idx, col)] = 1.0;
    }
    Ok(Projector { p: mat, kind })
}

/// Parameter indices sorted by descending score, ties by ascending index.
pub fn ranked_indices(scores: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// The dominant eigen-directions of `J Ψ Jᵀ` together with `Ψ Jᵀ`.
#[derive(Debug, Clone)]
pub struct LowrankBasis {
    /// `Ψ Jᵀ`, `p × nC`.
    pub psi_jt: DenseMatrix,
    /// Eigenvalues of `J Ψ Jᵀ`, descending.
    pub values: DVector<f64>,
    /// Matching eigenvectors.
    pub vectors: DenseMatrix,
    pub usable_rank: usize,
}

impl LowrankBasis {
    pub fn new(post: &PosteriorApprox, jac: &Jacobian, rank_tol: f64) -> Result<Self> {
        let psi_jt = post.apply_psi(&jac.matrix.transpose())?;
        let m = &jac.matrix * &psi_jt;
        let eig = sym_eig(&m)?;
        let usable_rank = eig.rank(rank_tol);
        Ok(Self {
            psi_jt,
            values: eig.values,
            vectors: eig.vectors,
            usable_rank,
        })
    }

    /// `P = Ψ Jᵀ U_s`.
    pub fn projector(&self, s: usize, kind: ProjectorKind) -> Result<Projector> {
        if s == 0 {
            return Err(Error::Argument("subspace dimension must be >= 1".into()));
        }
        if s > self.usable_rank {
            return Err(Error::Rank {
                requested: s,
                usable: self.usable_rank,
            });
        }
        let us = self.vectors.columns(0, s);
        Projector::new(&self.psi_jt * us, kind)
    }
}

/// Low-rank projector from an approximate posterior and the Jacobian of the
/// construction inputs.
pub fn lowrank_projector(
    post: &PosteriorApprox,
    jac: &Jacobian,
    s: usize,
    kind: ProjectorKind,
) -> Result<Projector> {
    lowrank_projector_with_tol(post, jac, s, kind, DEFAULT_RANK_TOL)
}

pub fn lowrank_projector_with_tol(
    post: &PosteriorApprox,
    jac: &Jacobian,
    s: usize,
    kind: ProjectorKind,
    rank_tol: f64,
) -> Result<Projector> {
    let max = jac.rows().min(jac.params());
    if s > max {
        return Err(Error::Argument(format!(
            "s = {s} exceeds min(nC, p) = {max}"
        )));
    }
    LowrankBasis::new(post, jac, rank_tol)?.projector(s, kind)
}

/// Optimal projector `Ψ J_Xᵀ U_s` for the exact GGN posterior built from
/// `factor` and prior precision `λ`, on evaluation inputs with Jacobian `jac`.
pub fn optimal_projector(
    factor: &CurvatureFactor,
    prior_precision: f64,
    jac: &Jacobian,
    s: usize,
) -> Result<Projector> {
    let post = PosteriorApprox::full(factor, prior_precision)?;
    optimal_projector_from(&post, jac, s)
}

/// As [`optimal_projector`] with an already built full posterior.
pub fn optimal_projector_from(post: &PosteriorApprox, jac: &Jacobian, s: usize) -> Result<Projector> {
    if post.kind() != PosteriorKind::Full {
        return Err(Error::Argument(
            "the optimal projector needs the exact (full) posterior".into(),
        ));
    }
    lowrank_projector(post, jac, s, ProjectorKind::LowrankOptGgn)
}

pub fn full_projector(p: usize) -> Projector {
    Projector {
        p: DenseMatrix::identity(p, p),
        kind: ProjectorKind::Full,
    }
}

/// `‖Σ_{PQ} − Σ_P‖_F / ‖Σ_P‖_F` for a covariance builder `sigma_of`.
pub fn gauge_invariance_check<F>(proj: &Projector, q: &DenseMatrix, sigma_of: F) -> Result<f64>
where
    F: Fn(&DenseMatrix) -> Result<DenseMatrix>,
{
    if !q.is_square() || q.nrows() != proj.s() {
        return Err(Error::Dimension(format!(
            "gauge must be {0}x{0}, got {1}x{2}",
            proj.s(),
            q.nrows(),
            q.ncols()
        )));
    }
    let sv = q.clone().singular_values();
    let (max, min) = sv
        .iter()
        .fold((0.0_f64, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
    if !(min > 0.0) || max / min >= 1e8 {
        return Err(Error::Argument(format!(
            "gauge matrix is singular or ill-conditioned (condition {:e})",
            max / min
        )));
    }
    let base = sigma_of(&proj.p)?;
    let moved = sigma_of(&(&proj.p * q))?;
    let norm = frob_norm(&base);
    if norm == 0.0 {
        return Ok(frob_norm(&moved));
    }
    Ok(frob_norm(&(moved - &base)) / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::curvature_factor;
    use crate::data::synth_sincos;
    use crate::model::{Network, NetworkSpec};

    #[test]
    fn subset_sorting_and_ties() {
        let p = subset_projector(&DVector::from_vec(vec![3.0, 1.0, 2.0]), 2, ProjectorKind::SubsetMagnitude).unwrap();
        assert_eq!(p.selected_indices().unwrap(), vec![0, 2]);

        let t = subset_projector(&DVector::from_vec(vec![1.0, 1.0]), 1, ProjectorKind::SubsetDiagonal).unwrap();
        assert_eq!(t.selected_indices().unwrap(), vec![0]);
    }

    #[test]
    fn subset_full_selection_is_permutation() {
        let scores = DVector::from_vec(vec![0.2, 5.0, -1.0, 3.0]);
        let p = subset_projector(&scores, 4, ProjectorKind::SubsetSwag).unwrap();
        assert_eq!(p.p.transpose() * &p.p, DenseMatrix::identity(4, 4));
        assert_eq!(&p.p * p.p.transpose(), DenseMatrix::identity(4, 4));
    }

    #[test]
    fn subset_rejects_oversized_s() {
        let scores = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            subset_projector(&scores, 3, ProjectorKind::SubsetMagnitude),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn projector_rank_check() {
        let mut m = DenseMatrix::zeros(3, 2);
        m[(0, 0)] = 1.0;
        m[(0, 1)] = 2.0;
        assert!(matches!(
            Projector::new(m, ProjectorKind::LowrankKfac),
            Err(Error::Rank { .. })
        ));
    }

    fn problem() -> (Network, CurvatureFactor, Jacobian) {
        let net = Network::init(NetworkSpec::new(vec![1, 6, 1]).unwrap(), 1);
        let data = synth_sincos(30, 0.1, (-3.0, 3.0), 2).unwrap();
        let factor = curvature_factor(&net, &data).unwrap();
        let eval = synth_sincos(8, 0.1, (-3.0, 3.0), 3).unwrap();
        let jac = net.jacobian(&eval.x).unwrap();
        (net, factor, jac)
    }

    #[test]
    fn identity_posterior_reduction() {
        let (net, _, jac) = problem();
        let p = net.param_count();
        let lambda = 2.0;
        let zero = CurvatureFactor::from_matrix(DenseMatrix::zeros(p, 1), 1).unwrap();
        let post = PosteriorApprox::full(&zero, lambda).unwrap();
        let proj = lowrank_projector(&post, &jac, 3, ProjectorKind::LowrankOptGgn).unwrap();
        let gram = &jac.matrix * jac.matrix.transpose() / lambda;
        let eig = sym_eig(&gram).unwrap();
        let expected = jac.matrix.transpose() * eig.vectors.columns(0, 3) / lambda;
        assert!(frob_norm(&(&proj.p - &expected)) < 1e-10 * frob_norm(&expected));
    }

    #[test]
    fn construction_is_deterministic() {
        let (_, factor, jac) = problem();
        let a = optimal_projector(&factor, 1.0, &jac, 4).unwrap();
        let b = optimal_projector(&factor, 1.0, &jac, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rank_error_reports_usable_dimension() {
        let (_, factor, jac) = problem();
        let post = PosteriorApprox::full(&factor, 1.0).unwrap();
        let basis = LowrankBasis::new(&post, &jac, DEFAULT_RANK_TOL).unwrap();
        let usable = basis.usable_rank;
        match basis.projector(usable + 1, ProjectorKind::LowrankOptGgn) {
            Err(Error::Rank { usable: u, .. }) => assert_eq!(u, usable),
            Err(Error::Argument(_)) => assert_eq!(usable, jac.rows()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn optimal_requires_full_posterior() {
        let (net, _, jac) = problem();
        let diag = PosteriorApprox::diagonal(&DVector::zeros(net.param_count()), 1.0).unwrap();
        assert!(optimal_projector_from(&diag, &jac, 1).is_err());
    }

    #[test]
    fn full_projector_is_identity() {
        let p = full_projector(5);
        assert_eq!(p.s(), 5);
        assert_eq!(p.p.transpose() * &p.p, DenseMatrix::identity(5, 5));
    }

    #[test]
    fn gauge_rejects_singular() {
        let p = full_projector(2);
        let q = DenseMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            gauge_invariance_check(&p, &q, |m| Ok(m.clone())),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn projector_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let (_, factor, jac) = problem();
        let proj = optimal_projector(&factor, 1.0, &jac, 2).unwrap();
        proj.save(&path).unwrap();
        assert_eq!(Projector::load(&path).unwrap(), proj);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ProjectorKind::ALL {
            assert_eq!(k.name().parse::<ProjectorKind>().unwrap(), k);
        }
    }
}
