//! Evaluation metrics and the per-run / aggregate CSV reports.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Targets;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::linalg::{frob_norm, symmetrize, DenseMatrix};
use crate::model::Jacobian;
use crate::predictive::{EpistemicCov, PredictiveDist};
use crate::subspace::ProjectorKind;

/// Default relative sensitivity threshold for dead parameters.
pub const DEFAULT_DEAD_THRESHOLD: f64 = 1e-6;
/// Trace or error differences at or below this count as ties.
pub const TIE_TOL: f64 = 1e-12;

/// `‖Σ_X − Σ_P‖_F / ‖Σ_X‖_F`.
pub fn relative_error(full: &EpistemicCov, approx: &EpistemicCov) -> Result<f64> {
    if full.dim() != approx.dim() {
        return Err(Error::Dimension(format!(
            "covariances are {} and {} dimensional",
            full.dim(),
            approx.dim()
        )));
    }
    let norm = frob_norm(&full.sigma);
    if norm == 0.0 {
        return Err(Error::UndefinedMetric(
            "relative error against a zero covariance".into(),
        ));
    }
    Ok(frob_norm(&(&full.sigma - &approx.sigma)) / norm)
}

pub fn trace_criterion(cov: &EpistemicCov) -> f64 {
    cov.trace()
}

/// Natural log of the trace; a zero (or roundoff-negative) trace is absent.
pub fn log_trace(trace: f64) -> Option<f64> {
    (trace > 0.0).then(|| trace.ln())
}

fn stacked_targets(y: &Targets, n: usize, c: usize) -> Result<Vec<f64>> {
    match y {
        Targets::Real(m) if m.nrows() == n && m.ncols() == c => {
            Ok((0..n).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect())
        }
        Targets::Real(m) => Err(Error::Dimension(format!(
            "targets are {}x{}, predictive covers {n}x{c}",
            m.nrows(),
            m.ncols()
        ))),
        Targets::Labels(_) => Err(Error::Argument(
            "Gaussian predictive needs real-valued targets".into(),
        )),
    }
}

/// Averaged negative log predictive density. Regression uses the joint
/// Gaussian over all `nC` outputs.
pub fn nll(pred: &PredictiveDist, y: &Targets) -> Result<f64> {
    match pred {
        PredictiveDist::Gaussian(g) => {
            let d = g.mean.len();
            let n = d / g.c;
            let r = DVector::from_vec(stacked_targets(y, n, g.c)?) - &g.mean;
            let chol = Cholesky::new(symmetrize(&g.total_cov))
                .ok_or_else(|| Error::Numeric("predictive covariance is singular".into()))?;
            let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let maha = r.dot(&chol.solve(&r));
            let log_pdf = -0.5 * (d as f64 * (2.0 * PI).ln() + log_det + maha);
            if !log_pdf.is_finite() {
                return Err(Error::Numeric("non-finite Gaussian log-density".into()));
            }
            Ok(-log_pdf / n as f64)
        }
        PredictiveDist::Categorical(c) => {
            let Targets::Labels(labels) = y else {
                return Err(Error::Argument("categorical predictive needs labels".into()));
            };
            if labels.len() != c.probs.nrows() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} predictions",
                    labels.len(),
                    c.probs.nrows()
                )));
            }
            let mut total = 0.0;
            for (i, &label) in labels.iter().enumerate() {
                if label >= c.probs.ncols() {
                    return Err(Error::Argument(format!("label {label} out of range")));
                }
                total -= c.probs[(i, label)].ln();
            }
            Ok(total / labels.len() as f64)
        }
    }
}

/// Per-point NLL that ignores cross-output covariances (only meaningful for
/// Gaussian predictives; the categorical one is already per point).
pub fn nll_diagonal(pred: &PredictiveDist, y: &Targets) -> Result<f64> {
    match pred {
        PredictiveDist::Gaussian(g) => {
            let d = g.mean.len();
            let n = d / g.c;
            let targets = stacked_targets(y, n, g.c)?;
            let mut total = 0.0;
            for k in 0..d {
                let var = g.total_cov[(k, k)];
                if !(var > 0.0) {
                    return Err(Error::Numeric(format!("non-positive variance {var} at output {k}")));
                }
                let r = targets[k] - g.mean[k];
                total += 0.5 * ((2.0 * PI * var).ln() + r * r / var);
            }
            Ok(total / n as f64)
        }
        PredictiveDist::Categorical(_) => nll(pred, y),
    }
}

#[derive(Debug, Clone)]
pub struct DeadParameterReport {
    pub fraction: f64,
    pub threshold_rel: f64,
    /// Mean `|J_{·j}|` over samples and outputs.
    pub sensitivity: DVector<f64>,
    /// Parameter indices by descending sensitivity (ties by index).
    pub order: Vec<usize>,
    /// `n × p` per-sample sensitivities (mean over outputs), columns in `order`.
    pub heatmap: DenseMatrix,
}

impl DeadParameterReport {
    /// Long-format CSV: `sample,rank,parameter,sensitivity`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("sample,rank,parameter,sensitivity\n");
        for i in 0..self.heatmap.nrows() {
            for (rank, &param) in self.order.iter().enumerate() {
                writeln!(out, "{i},{rank},{param},{}", self.heatmap[(i, rank)]).unwrap();
            }
        }
        write_atomic(path, out.as_bytes())
    }
}

/// Fraction of parameters whose sensitivity is below `threshold_rel` times
/// the largest one. Exactly-zero sensitivities always count as dead.
pub fn dead_parameter_fraction(jac: &Jacobian, threshold_rel: f64) -> Result<DeadParameterReport> {
    if jac.matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Jacobian has non-finite entries".into()));
    }
    if !(threshold_rel >= 0.0) {
        return Err(Error::Argument(format!("threshold must be >= 0, got {threshold_rel}")));
    }
    let (n, c, p) = (jac.n, jac.c, jac.params());
    let mut per_sample = DenseMatrix::zeros(n, p);
    for i in 0..n {
        for k in 0..c {
            let row = jac.matrix.row(i * c + k);
            for j in 0..p {
                per_sample[(i, j)] += row[j].abs() / c as f64;
            }
        }
    }
    let sensitivity = DVector::from_fn(p, |j, _| per_sample.column(j).sum() / n.max(1) as f64);
    let max = sensitivity.max();
    let dead = sensitivity
        .iter()
        .filter(|&&s| s == 0.0 || s < threshold_rel * max)
        .count();
    let order = crate::subspace::ranked_indices(&sensitivity);
    let heatmap = DenseMatrix::from_fn(n, p, |i, r| per_sample[(i, order[r])]);
    Ok(DeadParameterReport {
        fraction: dead as f64 / p.max(1) as f64,
        threshold_rel,
        sensitivity,
        order,
        heatmap,
    })
}

/// One `(dataset, method, s, seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub method: ProjectorKind,
    pub s: usize,
    pub seed: u64,
    pub rel_error: Option<f64>,
    pub trace: f64,
    pub log_trace: Option<f64>,
    pub nll: f64,
    pub nll_diag: Option<f64>,
}

pub const REPORT_HEADER: &str = "dataset,method,s,seed,rel_error,trace,log_trace,nll,nll_diag";

pub fn write_reports(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r)?;
    }
    if reports.is_empty() {
        let mut empty = String::from(REPORT_HEADER);
        empty.push('\n');
        return write_atomic(path, empty.as_bytes());
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Reads a report CSV, skipping (and counting) rows that do not parse.
pub fn read_reports(path: &Path) -> Result<(Vec<MetricsReport>, usize)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for record in reader.deserialize::<MetricsReport>() {
        match record {
            Ok(r) => rows.push(r),
            Err(e) => {
                log::warn!("{}: skipping malformed row: {e}", path.display());
                skipped += 1;
            }
        }
    }
    Ok((rows, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgreementCounts {
    pub agree: usize,
    pub total: usize,
}

impl AgreementCounts {
    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.agree as f64 / self.total as f64)
    }
}

/// Seed-averaged `(trace, rel_error)` per `(dataset, s)` group and method.
fn seed_means(reports: &[MetricsReport]) -> BTreeMap<(String, usize), BTreeMap<ProjectorKind, (f64, f64)>> {
    let mut sums: BTreeMap<(String, usize, ProjectorKind), (f64, f64, usize)> = BTreeMap::new();
    for r in reports {
        let Some(err) = r.rel_error else { continue };
        let e = sums.entry((r.dataset.clone(), r.s, r.method)).or_default();
        e.0 += r.trace;
        e.1 += err;
        e.2 += 1;
    }
    let mut groups: BTreeMap<(String, usize), BTreeMap<ProjectorKind, (f64, f64)>> = BTreeMap::new();
    for ((dataset, s, method), (t, e, k)) in sums {
        groups
            .entry((dataset, s))
            .or_default()
            .insert(method, (t / k as f64, e / k as f64));
    }
    groups
}

/// Method pairs (within each `(dataset, s)` group, after averaging over
/// seeds) where the larger trace goes with the smaller relative error.
pub fn ordering_counts(reports: &[MetricsReport]) -> AgreementCounts {
    let mut counts = AgreementCounts::default();
    for methods in seed_means(reports).values() {
        let vals: Vec<(f64, f64)> = methods.values().copied().collect();
        for a in 0..vals.len() {
            for b in a + 1..vals.len() {
                let dt = vals[a].0 - vals[b].0;
                let de = vals[b].1 - vals[a].1;
                if dt.abs() <= TIE_TOL || de.abs() <= TIE_TOL {
                    continue;
                }
                counts.total += 1;
                if dt.signum() == de.signum() {
                    counts.agree += 1;
                }
            }
        }
    }
    counts
}

/// Fraction of agreeing pairs; `None` when no pair is countable.
pub fn ordering_agreement(reports: &[MetricsReport]) -> Option<f64> {
    ordering_counts(reports).fraction()
}

/// Mean and sample standard error (`std/√k`, `k − 1` denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: Option<f64>,
    pub count: usize,
}

pub fn mean_stderr(values: &[f64]) -> Option<MeanStderr> {
    let k = values.len();
    if k == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let stderr = (k > 1).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    });
    Some(MeanStderr {
        mean,
        stderr,
        count: k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub method: ProjectorKind,
    pub s: usize,
    pub seeds: usize,
    pub rel_error_mean: Option<f64>,
    pub rel_error_stderr: Option<f64>,
    pub trace_mean: f64,
    pub trace_stderr: Option<f64>,
    pub log_trace_mean: Option<f64>,
    pub log_trace_stderr: Option<f64>,
    pub nll_mean: f64,
    pub nll_stderr: Option<f64>,
}

/// Groups by `(dataset, method, s)`. Absent values are left out of their
/// column's statistics; a column with no values stays absent.
pub fn aggregate(reports: &[MetricsReport]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, ProjectorKind, usize), Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.dataset.clone(), r.method, r.s)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((dataset, method, s), rows)| {
            let col = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
                mean_stderr(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let rel = col(&|r| r.rel_error);
            let trace = col(&|r| Some(r.trace)).unwrap();
            let logt = col(&|r| r.log_trace);
            let nll = col(&|r| Some(r.nll)).unwrap();
            AggregateRow {
                dataset,
                method,
                s,
                seeds: rows.len(),
                rel_error_mean: rel.map(|m| m.mean),
                rel_error_stderr: rel.and_then(|m| m.stderr),
                trace_mean: trace.mean,
                trace_stderr: trace.stderr,
                log_trace_mean: logt.map(|m| m.mean),
                log_trace_stderr: logt.and_then(|m| m.stderr),
                nll_mean: nll.mean,
                nll_stderr: nll.stderr,
            }
        })
        .collect()
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}
