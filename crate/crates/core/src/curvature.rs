//! GGN / Fisher curvature objects.
//!
//! All curvature objects use the unaveraged convention: they represent
//! `Σᵢ Jᵢᵀ Hᵢ Jᵢ`, so the Laplace precision is simply curvature + λ·𝟙.
//! The central object is the factor `V ∈ ℝ^{p×NC}` with
//! `V Vᵀ = Σᵢ Jᵢᵀ Hᵢ Jᵢ`; column `i·C + k` is `Jᵢᵀ Bᵢ[:, k]` where
//! `Bᵢ Bᵢᵀ = Hᵢ` is an exact square root of the output-space Hessian.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::io::{self, Reader, CURVATURE_MAGIC};
use crate::linalg::DenseMatrix;
use crate::model::{LayerShape, Network};
use crate::train::softmax;

/// Largest `p` for which a dense `p × p` matrix is materialized.
pub const DENSE_PARAM_LIMIT: usize = 25_000;
/// Default cap on the number of entries of a materialized factor `V`.
pub const DEFAULT_FACTOR_ENTRY_LIMIT: usize = 200_000_000;
/// Largest `p` accepted by the finite-difference Hessian.
pub const FD_PARAM_LIMIT: usize = 500;

/// Hessian of `−ln p(y|f)` with respect to the network output `f`.
pub fn output_hessian(f: &[f64], task: Task) -> DenseMatrix {
    let c = f.len();
    match task {
        Task::Regression { sigma } => DenseMatrix::identity(c, c) / (sigma * sigma),
        Task::Classification { .. } => {
            let phi = softmax(f);
            DenseMatrix::from_fn(c, c, |a, b| {
                let d = if a == b { phi[a] } else { 0.0 };
                d - phi[a] * phi[b]
            })
        }
    }
}

/// Square root `B` with `B Bᵀ = output_hessian(f)`:
/// `σ⁻¹𝟙` for regression, `diag(√φ) − φ √φᵀ` for softmax.
pub fn output_hessian_sqrt(f: &[f64], task: Task) -> DenseMatrix {
    let c = f.len();
    match task {
        Task::Regression { sigma } => DenseMatrix::identity(c, c) / sigma,
        Task::Classification { .. } => {
            let phi = softmax(f);
            let root: Vec<f64> = phi.iter().map(|v| v.sqrt()).collect();
            DenseMatrix::from_fn(c, c, |a, b| {
                let d = if a == b { root[a] } else { 0.0 };
                d - phi[a] * root[b]
            })
        }
    }
}

fn row(x: &DenseMatrix, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

/// Columns `Jᵢᵀ Bᵢ` of one sample, as `C` vectors of length `p`.
fn sample_factor_columns(net: &Network, x: &[f64], task: Task) -> Vec<Vec<f64>> {
    let trace = net.forward_trace(x);
    let b = output_hessian_sqrt(trace.output(), task);
    let c = b.ncols();
    (0..c)
        .map(|k| {
            let v: Vec<f64> = b.column(k).iter().copied().collect();
            let mut col = vec![0.0; net.param_count()];
            net.vjp_into(&trace, &v, &mut col);
            col
        })
        .collect()
}

/// Anything that can hand out the columns of `V` in blocks.
pub trait CurvatureSource {
    fn param_count(&self) -> usize;
    fn column_count(&self) -> usize;
    /// Calls `visit` with consecutive `p × k` column blocks of `V`, in order.
    fn for_each_block(&self, block_cols: usize, visit: &mut dyn FnMut(&DenseMatrix)) -> Result<()>;
}

/// Materialized curvature factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureFactor {
    pub v: DenseMatrix,
    pub n: usize,
    pub c: usize,
}

impl CurvatureFactor {
    pub fn from_matrix(v: DenseMatrix, c: usize) -> Result<Self> {
        if c == 0 || !v.ncols().is_multiple_of(c) {
            return Err(Error::Dimension(format!(
                "factor has {} columns, not a multiple of C = {c}",
                v.ncols()
            )));
        }
        Ok(Self {
            n: v.ncols() / c,
            c,
            v,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(40 + self.v.len() * 8);
        buf.extend_from_slice(CURVATURE_MAGIC);
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        buf.extend_from_slice(&(self.c as u64).to_le_bytes());
        io::encode_matrix(&self.v, &mut buf);
        io::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io::read_all(path)?;
        let mut r = Reader::new(&bytes);
        r.magic(CURVATURE_MAGIC)?;
        let n = r.u64()? as usize;
        let c = r.u64()? as usize;
        let v = r.matrix()?;
        r.finish()?;
        if v.ncols() != n * c {
            return Err(Error::Format(format!(
                "factor header says N·C = {}, matrix has {} columns",
                n * c,
                v.ncols()
            )));
        }
        Ok(Self { v, n, c })
    }
}

impl CurvatureSource for CurvatureFactor {
    fn param_count(&self) -> usize {
        self.v.nrows()
    }

    fn column_count(&self) -> usize {
        self.v.ncols()
    }

    fn for_each_block(&self, block_cols: usize, visit: &mut dyn FnMut(&DenseMatrix)) -> Result<()> {
        let total = self.v.ncols();
        let step = block_cols.max(1);
        let mut start = 0;
        while start < total {
            let k = step.min(total - start);
            visit(&self.v.columns(start, k).into_owned());
            start += k;
        }
        Ok(())
    }
}

/// Computes the columns of `V` on demand, one batch of samples at a time,
/// for problems where `p·N·C` is too large to store.
pub struct StreamingCurvature<'a> {
    pub net: &'a Network,
    pub data: &'a Dataset,
}

impl CurvatureSource for StreamingCurvature<'_> {
    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn column_count(&self) -> usize {
        self.data.len() * self.net.output_dim()
    }

    fn for_each_block(&self, block_cols: usize, visit: &mut dyn FnMut(&DenseMatrix)) -> Result<()> {
        let c = self.net.output_dim();
        let per_block = (block_cols / c).max(1);
        let n = self.data.len();
        let mut start = 0;
        while start < n {
            let end = (start + per_block).min(n);
            let block = factor_columns(self.net, self.data, start..end)?;
            visit(&block);
            start = end;
        }
        Ok(())
    }
}

fn factor_columns(net: &Network, data: &Dataset, samples: std::ops::Range<usize>) -> Result<DenseMatrix> {
    if data.input_dim() != net.input_dim() {
        return Err(Error::Argument(format!(
            "data has {} features, network expects {}",
            data.input_dim(),
            net.input_dim()
        )));
    }
    let c = net.output_dim();
    let p = net.param_count();
    let first = samples.start;
    let cols: Vec<Vec<Vec<f64>>> = samples
        .clone()
        .into_par_iter()
        .map(|i| sample_factor_columns(net, &row(&data.x, i), data.task))
        .collect();
    let mut v = DenseMatrix::zeros(p, (samples.end - first) * c);
    for (i, block) in cols.iter().enumerate() {
        for (k, col) in block.iter().enumerate() {
            v.column_mut(i * c + k).copy_from_slice(col);
        }
    }
    Ok(v)
}

/// Builds `V` for the likelihood stored in `data.task`, refusing to
/// materialize more than `max_entries` values.
pub fn curvature_factor_with_limit(net: &Network, data: &Dataset, max_entries: usize) -> Result<CurvatureFactor> {
    let c = net.output_dim();
    let needed = net.param_count() * data.len() * c;
    if needed > max_entries {
        return Err(Error::Capacity {
            what: "curvature factor entries",
            needed,
            limit: max_entries,
        });
    }
    Ok(CurvatureFactor {
        v: factor_columns(net, data, 0..data.len())?,
        n: data.len(),
        c,
    })
}

pub fn curvature_factor(net: &Network, data: &Dataset) -> Result<CurvatureFactor> {
    curvature_factor_with_limit(net, data, DEFAULT_FACTOR_ENTRY_LIMIT)
}

/// Dense `V Vᵀ`.
pub fn ggn_full(factor: &CurvatureFactor) -> Result<DenseMatrix> {
    let p = factor.v.nrows();
    if p > DENSE_PARAM_LIMIT {
        return Err(Error::Capacity {
            what: "dense GGN parameters",
            needed: p,
            limit: DENSE_PARAM_LIMIT,
        });
    }
    Ok(&factor.v * factor.v.transpose())
}

/// Diagonal of `V Vᵀ` accumulated block by block.
pub fn ggn_diag(source: &dyn CurvatureSource) -> Result<DVector<f64>> {
    let mut diag = DVector::zeros(source.param_count());
    source.for_each_block(1024, &mut |block| {
        for col in block.column_iter() {
            for (d, v) in diag.iter_mut().zip(col.iter()) {
                *d += v * v;
            }
        }
    })?;
    Ok(diag)
}

/// Kronecker factors of one affine layer. The layer's curvature block is
/// approximated by `(G ⊗ A) / n` in the ordering where parameter
/// `(o, i)` of the bias-augmented weight `[W | b]` sits at `o·(in+1) + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct KfacLayer {
    pub shape: LayerShape,
    /// `Σᵢ aᵢaᵢᵀ` of bias-augmented layer inputs, `(in+1) × (in+1)`.
    pub a: DenseMatrix,
    /// `Σᵢ Σₖ δᵢₖδᵢₖᵀ` of back-propagated Hessian square-root columns, `out × out`.
    pub g: DenseMatrix,
}

impl KfacLayer {
    /// Flat parameter index of Kronecker position `o·(in+1) + i`.
    pub fn param_index(&self, kron_index: usize) -> usize {
        let width = self.shape.fan_in + 1;
        let (o, i) = (kron_index / width, kron_index % width);
        if i == self.shape.fan_in {
            self.shape.bias_index(o)
        } else {
            self.shape.weight_index(o, i)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KfacFactors {
    pub layers: Vec<KfacLayer>,
    pub n: usize,
}

impl KfacFactors {
    /// Dense curvature block `(G ⊗ A)/n` of layer `l` in flat parameter order
    /// (rows/cols restricted to the layer's parameters).
    pub fn dense_block(&self, l: usize) -> DenseMatrix {
        let layer = &self.layers[l];
        let kron = layer.g.kronecker(&layer.a) / self.n as f64;
        let m = layer.shape.param_count();
        let mut out = DenseMatrix::zeros(m, m);
        for r in 0..m {
            let pr = layer.param_index(r) - layer.shape.offset;
            for c in 0..m {
                let pc = layer.param_index(c) - layer.shape.offset;
                out[(pr, pc)] = kron[(r, c)];
            }
        }
        out
    }
}

pub fn kfac_factors(net: &Network, data: &Dataset) -> Result<KfacFactors> {
    if data.input_dim() != net.input_dim() {
        return Err(Error::Argument("data width does not match the network".into()));
    }
    let shapes = net.spec.layers();
    let mut layers: Vec<KfacLayer> = shapes
        .iter()
        .map(|&shape| KfacLayer {
            shape,
            a: DenseMatrix::zeros(shape.fan_in + 1, shape.fan_in + 1),
            g: DenseMatrix::zeros(shape.fan_out, shape.fan_out),
        })
        .collect();
    for i in 0..data.len() {
        let trace = net.forward_trace(&row(&data.x, i));
        for (layer, input) in layers.iter_mut().zip(&trace.inputs) {
            let mut a = input.clone();
            a.push(1.0);
            let a = DVector::from_vec(a);
            layer.a.ger(1.0, &a, &a, 1.0);
        }
        let b = output_hessian_sqrt(trace.output(), data.task);
        for k in 0..b.ncols() {
            let v: Vec<f64> = b.column(k).iter().copied().collect();
            net.backward_layers(&trace, &v, |l, delta, _| {
                let d = DVector::from_column_slice(delta);
                layers[l].g.ger(1.0, &d, &d, 1.0);
            });
        }
    }
    Ok(KfacFactors {
        layers,
        n: data.len(),
    })
}

/// Central-difference Hessian of a function given its gradient, symmetrized.
pub fn fd_hessian_of<F>(grad: F, theta: &DVector<f64>, h: f64) -> DenseMatrix
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let p = theta.len();
    let mut hess = DenseMatrix::zeros(p, p);
    for k in 0..p {
        let mut plus = theta.clone();
        plus[k] += h;
        let mut minus = theta.clone();
        minus[k] -= h;
        let col = (grad(&plus) - grad(&minus)) / (2.0 * h);
        hess.set_column(k, &col);
    }
    (&hess + hess.transpose()) * 0.5
}

/// Gradient of `Σᵢ −ln p(yᵢ|xᵢ,θ)` at `theta`.
pub fn nll_gradient(net: &Network, data: &Dataset, theta: &DVector<f64>) -> DVector<f64> {
    let probe = net.with_theta(theta.clone());
    let mut grad = vec![0.0; net.param_count()];
    for i in 0..data.len() {
        let trace = probe.forward_trace(&row(&data.x, i));
        let g_out = nll_output_gradient(trace.output(), data, i);
        probe.vjp_into(&trace, &g_out, &mut grad);
    }
    DVector::from_vec(grad)
}

fn nll_output_gradient(f: &[f64], data: &Dataset, i: usize) -> Vec<f64> {
    match (&data.y, data.task) {
        (crate::data::Targets::Real(y), Task::Regression { sigma }) => f
            .iter()
            .enumerate()
            .map(|(c, fc)| (fc - y[(i, c)]) / (sigma * sigma))
            .collect(),
        (crate::data::Targets::Labels(l), Task::Classification { .. }) => {
            let mut g = softmax(f);
            g[l[i]] -= 1.0;
            g
        }
        _ => unreachable!("dataset invariants tie target kind to task"),
    }
}

/// Finite-difference Hessian of the negative log-likelihood sum, plus
/// `prior_precision·𝟙`. Validation only: `p ≤ 500`.
pub fn loss_hessian_fd(net: &Network, data: &Dataset, prior_precision: f64) -> Result<DenseMatrix> {
    let p = net.param_count();
    if p > FD_PARAM_LIMIT {
        return Err(Error::Capacity {
            what: "finite-difference Hessian parameters",
            needed: p,
            limit: FD_PARAM_LIMIT,
        });
    }
    let mut h = fd_hessian_of(|t| nll_gradient(net, data, t), &net.theta, 1e-5);
    for k in 0..p {
        h[(k, k)] += prior_precision;
    }
    Ok(h)
}

/// Finite-difference estimate of the residual term
/// `Σᵢ Σ_c (∂ℓᵢ/∂f_c) ∇²_θ f_c(xᵢ)` that separates the Hessian from the GGN,
/// with the output gradients frozen at the current parameters.
pub fn residual_term_fd(net: &Network, data: &Dataset) -> Result<DenseMatrix> {
    let p = net.param_count();
    if p > FD_PARAM_LIMIT {
        return Err(Error::Capacity {
            what: "finite-difference residual parameters",
            needed: p,
            limit: FD_PARAM_LIMIT,
        });
    }
    let cotangents: Vec<Vec<f64>> = (0..data.len())
        .map(|i| {
            let f = net.forward_sample(&row(&data.x, i));
            nll_output_gradient(&f, data, i)
        })
        .collect();
    let frozen = |theta: &DVector<f64>| {
        let probe = net.with_theta(theta.clone());
        let mut grad = vec![0.0; p];
        for (i, g) in cotangents.iter().enumerate() {
            let trace = probe.forward_trace(&row(&data.x, i));
            probe.vjp_into(&trace, g, &mut grad);
        }
        DVector::from_vec(grad)
    };
    Ok(fd_hessian_of(frozen, &net.theta, 1e-5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, Targets};
    use crate::linalg::{frob_norm, sym_eig};
    use crate::model::NetworkSpec;

    fn neg_log_softmax(z: &[f64], y: usize) -> f64 {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - z[y]
    }

    #[test]
    fn regression_output_hessian_unit_noise() {
        let h = output_hessian(&[0.3, -1.0], Task::Regression { sigma: 1.0 });
        assert_eq!(h, DenseMatrix::identity(2, 2));
    }

    #[test]
    fn saturated_softmax_hessian_vanishes() {
        let h = output_hessian(&[800.0, 0.0], Task::Classification { classes: 2 });
        assert!(h.iter().all(|v| v.abs() < 1e-300));
    }

    #[test]
    fn softmax_hessian_matches_finite_differences() {
        let z = [0.4, -1.2, 2.1];
        let task = Task::Classification { classes: 3 };
        let h = output_hessian(&z, task);
        let step = 1e-4;
        for a in 0..3 {
            for b in 0..3 {
                let eval = |da: f64, db: f64| {
                    let mut w = z;
                    w[a] += da;
                    w[b] += db;
                    neg_log_softmax(&w, 1)
                };
                let fd = (eval(step, step) - eval(step, -step) - eval(-step, step)
                    + eval(-step, -step))
                    / (4.0 * step * step);
                assert!((fd - h[(a, b)]).abs() < 1e-6, "({a},{b}) fd={fd} h={}", h[(a, b)]);
            }
        }
        for r in 0..3 {
            assert!(h.row(r).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_sqrt_factor_reproduces_hessian() {
        let z = [1.5, 0.1, -0.7, 3.0];
        let task = Task::Classification { classes: 4 };
        let b = output_hessian_sqrt(&z, task);
        let h = output_hessian(&z, task);
        assert!(frob_norm(&(&b * b.transpose() - h)) < 1e-12);
    }

    #[test]
    fn linear_regression_factor_column_is_features() {
        let net = Network::init(NetworkSpec::new(vec![2, 1]).unwrap(), 0);
        let ds = Dataset::new(
            DenseMatrix::from_row_slice(1, 2, &[0.5, -2.0]),
            Targets::Real(DenseMatrix::zeros(1, 1)),
            Task::Regression { sigma: 1.0 },
        )
        .unwrap();
        let f = curvature_factor(&net, &ds).unwrap();
        assert_eq!(f.v.column(0).as_slice(), &[0.5, -2.0, 1.0]);
    }

    fn dense_ggn(net: &Network, data: &Dataset) -> DenseMatrix {
        let p = net.param_count();
        let mut sum = DenseMatrix::zeros(p, p);
        for i in 0..data.len() {
            let x = row(&data.x, i);
            let rows = net.sample_jacobian(&x);
            let c = rows.len();
            let j = DenseMatrix::from_fn(c, p, |r, k| rows[r][k]);
            let h = output_hessian(&net.forward_sample(&x), data.task);
            sum += j.transpose() * h * j;
        }
        sum
    }

    #[test]
    fn factor_matches_dense_assembly() {
        let net = Network::init(NetworkSpec::new(vec![2, 8, 3]).unwrap(), 5);
        let data = synth_blobs(20, 3, 2, 2.0, 1).unwrap();
        let factor = curvature_factor(&net, &data).unwrap();
        let ggn = ggn_full(&factor).unwrap();
        let dense = dense_ggn(&net, &data);
        assert!(frob_norm(&(&ggn - &dense)) <= 1e-10 * frob_norm(&dense));

        let diag = ggn_diag(&factor).unwrap();
        for k in 0..diag.len() {
            assert!((diag[k] - ggn[(k, k)]).abs() <= 1e-12 * ggn[(k, k)].abs().max(1.0));
        }
        let streamed = ggn_diag(&StreamingCurvature { net: &net, data: &data }).unwrap();
        assert!((streamed - diag).abs().max() < 1e-12);
    }

    #[test]
    fn ggn_is_psd_and_rank_one_case() {
        let v = DenseMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let f = CurvatureFactor::from_matrix(v.clone(), 1).unwrap();
        assert_eq!(ggn_full(&f).unwrap(), &v * v.transpose());

        let net = Network::init(NetworkSpec::new(vec![2, 6, 3]).unwrap(), 1);
        let data = synth_blobs(15, 3, 2, 1.0, 2).unwrap();
        let g = ggn_full(&curvature_factor(&net, &data).unwrap()).unwrap();
        let eig = sym_eig(&g).unwrap();
        let min = eig.values[eig.dim() - 1];
        assert!(min >= -1e-10 * eig.values[0]);
    }

    #[test]
    fn zero_factor_zero_diag() {
        let f = CurvatureFactor::from_matrix(DenseMatrix::zeros(4, 6), 2).unwrap();
        assert!(ggn_diag(&f).unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn factor_capacity_guard() {
        let net = Network::init(NetworkSpec::new(vec![2, 6, 3]).unwrap(), 1);
        let data = synth_blobs(15, 3, 2, 1.0, 2).unwrap();
        assert!(matches!(
            curvature_factor_with_limit(&net, &data, 10),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn kfac_single_layer_regression_is_exact() {
        let net = Network::init(NetworkSpec::new(vec![3, 2]).unwrap(), 4);
        let mut data = crate::data::synth_friedman_like(25, 3, 0.1, 3).unwrap();
        data.y = Targets::Real(DenseMatrix::zeros(25, 2));
        let data = data.with_sigma(0.7);
        let kfac = kfac_factors(&net, &data).unwrap();
        let exact = ggn_full(&curvature_factor(&net, &data).unwrap()).unwrap();
        let block = kfac.dense_block(0);
        assert!(frob_norm(&(&block - &exact)) <= 1e-8 * frob_norm(&exact));
    }

    #[test]
    fn kfac_factors_psd_and_deterministic() {
        let net = Network::init(NetworkSpec::new(vec![2, 5, 4, 3]).unwrap(), 9);
        let data = synth_blobs(30, 3, 2, 2.0, 4).unwrap();
        let a = kfac_factors(&net, &data).unwrap();
        let b = kfac_factors(&net, &data).unwrap();
        assert_eq!(a, b);
        for layer in &a.layers {
            for m in [&layer.a, &layer.g] {
                let e = sym_eig(m).unwrap();
                assert!(e.values[e.dim() - 1] >= -1e-10 * e.values[0].max(1.0));
            }
        }
    }

    #[test]
    fn fd_hessian_of_quadratic() {
        let a = DenseMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 2.0]);
        let theta = DVector::from_vec(vec![0.3, -0.2, 1.0]);
        let h = fd_hessian_of(|t| &a * t, &theta, 1e-3);
        assert!(frob_norm(&(&h - &a)) < 1e-9);
        assert!(frob_norm(&(&h - h.transpose())) <= 1e-8);
    }

    #[test]
    fn fd_hessian_equals_ggn_for_linear_model() {
        let net = Network::init(NetworkSpec::new(vec![3, 2]).unwrap(), 2);
        let mut data = crate::data::synth_friedman_like(20, 3, 0.1, 5).unwrap();
        data.y = Targets::Real(DenseMatrix::from_fn(20, 2, |i, j| (i + j) as f64 * 0.1));
        let data = data.with_sigma(0.5);
        let h = loss_hessian_fd(&net, &data, 0.0).unwrap();
        let g = ggn_full(&curvature_factor(&net, &data).unwrap()).unwrap();
        assert!(frob_norm(&(&h - &g)) <= 1e-4 * frob_norm(&g));
    }

    #[test]
    fn fd_hessian_capacity_guard() {
        let net = Network::zeros(NetworkSpec::new(vec![30, 30, 1]).unwrap());
        let data = crate::data::synth_friedman_like(2, 30, 0.1, 0).unwrap();
        assert!(matches!(
            loss_hessian_fd(&net, &data, 0.0),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn factor_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let net = Network::init(NetworkSpec::new(vec![2, 4, 3]).unwrap(), 3);
        let data = synth_blobs(6, 3, 2, 1.0, 0).unwrap();
        let f = curvature_factor(&net, &data).unwrap();
        f.save(&path).unwrap();
        assert_eq!(CurvatureFactor::load(&path).unwrap(), f);
    }
}
