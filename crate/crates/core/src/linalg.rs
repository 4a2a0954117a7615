//! Dense linear-algebra kernels shared by the rest of the crate.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. The routines here add the
//! conventions the numerical pipeline relies on: descending eigenvalue
//! order, a deterministic eigenvector sign, and a single jittered retry for
//! Cholesky factorizations of matrices that are only positive semi-definite.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order. Column `k` of `vectors` belongs to `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DenseMatrix,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let scaled = scale_columns(&self.vectors, self.values.as_slice());
        &scaled * self.vectors.transpose()
    }

    /// Number of eigenvalues strictly above `rel_tol * max(|values|)`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if top == 0.0 {
            return 0;
        }
        self.values.iter().filter(|&&v| v > rel_tol * top).count()
    }
}

fn ensure_finite(a: &DenseMatrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains non-finite entries")))
    }
}

fn ensure_square(a: &DenseMatrix, what: &str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

pub fn capacity_guard(what: &'static str, needed: usize, limit: usize) -> Result<()> {
    if needed > limit {
        Err(Error::Capacity {
            what,
            needed,
            limit,
        })
    } else {
        Ok(())
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DenseMatrix) -> DenseMatrix {
    (a + a.transpose()) * 0.5
}

/// Multiplies column `j` of `m` by `scales[j]`.
pub fn scale_columns(m: &DenseMatrix, scales: &[f64]) -> DenseMatrix {
    let mut out = m.clone();
    for (j, &s) in scales.iter().enumerate() {
        out.column_mut(j).scale_mut(s);
    }
    out
}

/// Full symmetric eigendecomposition, values descending.
///
/// The input is symmetrized before decomposition. Each eigenvector is
/// flipped so that its first component with magnitude above `1e-12` is
/// positive.
pub fn sym_eig(a: &DenseMatrix) -> Result<SymEig> {
    ensure_square(a, "sym_eig input")?;
    ensure_finite(a, "sym_eig input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEig {
            values: DVector::zeros(0),
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: equal eigenvalues keep the solver's order
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok(SymEig { values, vectors })
}

/// Top-`s` eigenpairs of a symmetric PSD matrix.
pub fn truncated_eig(a: &DenseMatrix, s: usize) -> Result<SymEig> {
    ensure_square(a, "truncated_eig input")?;
    if s == 0 || s > a.nrows() {
        return Err(Error::Argument(format!(
            "truncation rank s = {s} outside 1..={}",
            a.nrows()
        )));
    }
    let full = sym_eig(a)?;
    Ok(SymEig {
        values: full.values.rows(0, s).into_owned(),
        vectors: full.vectors.columns(0, s).into_owned(),
    })
}

/// Cholesky factorization with one jittered retry
/// (`1e-10 · trace/dim` added to the diagonal).
pub fn cholesky(a: &DenseMatrix) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    ensure_square(a, "cholesky input")?;
    ensure_finite(a, "cholesky input")?;
    let sym = symmetrize(a);
    if let Some(ch) = Cholesky::new(sym.clone()) {
        return Ok(ch);
    }
    let n = a.nrows().max(1) as f64;
    let jitter = 1e-10 * (sym.trace().abs() / n).max(f64::MIN_POSITIVE);
    let mut shifted = sym;
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += jitter;
    }
    Cholesky::new(shifted).ok_or(Error::NotPositiveDefinite { jitter })
}

/// Solves `A X = B` for symmetric positive-definite `A`.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!(
            "solve_spd: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    ensure_finite(b, "solve_spd right-hand side")?;
    Ok(cholesky(a)?.solve(b))
}

pub fn frob_norm(a: &DenseMatrix) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Squared column norms.
pub fn column_sq_norms(m: &DenseMatrix) -> Vec<f64> {
    m.column_iter().map(|c| c.norm_squared()).collect()
}

/// Squared row norms.
pub fn row_sq_norms(m: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for col in m.column_iter() {
        for (o, v) in out.iter_mut().zip(col.iter()) {
            *o += v * v;
        }
    }
    out
}
