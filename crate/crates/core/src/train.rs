//! MAP training with plain SGD under a trapezoidal learning-rate schedule,
//! noise-level estimation, and SWAG moment collection.

use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets, Task};
use crate::error::{Error, Result};
use crate::model::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Fraction of all steps spent ramping the rate up linearly.
    pub warmup_frac: f64,
    /// Fraction of all steps after which the rate decays linearly to zero.
    pub decay_frac: f64,
    /// Mini-batch size; 0 means full batch.
    pub batch_size: usize,
    pub prior_precision: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 1e-2,
            warmup_frac: 0.1,
            decay_frac: 0.7,
            batch_size: 0,
            prior_precision: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_precision > 0.0) {
            return Err(Error::Argument("prior precision must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) || !(0.0..=1.0).contains(&self.decay_frac) {
            return Err(Error::Argument("schedule fractions outside [0, 1]".into()));
        }
        if self.warmup_frac > self.decay_frac {
            return Err(Error::Argument("warmup_frac must not exceed decay_frac".into()));
        }
        if !(self.lr >= 0.0) || self.epochs == 0 {
            return Err(Error::Argument("need lr >= 0 and epochs >= 1".into()));
        }
        Ok(())
    }
}

/// Piecewise-linear rate: ramp over the first `warmup_frac` of steps
/// (`lr/W, 2·lr/W, …`), hold `lr`, then fall linearly to exactly 0 at the
/// final step once `decay_frac` of the steps have passed.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub lr: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub decay_start: usize,
}

impl LrSchedule {
    pub fn new(lr: f64, total_steps: usize, warmup_frac: f64, decay_frac: f64) -> Self {
        let warmup_steps = (warmup_frac * total_steps as f64).round() as usize;
        let decay_start = ((decay_frac * total_steps as f64).round() as usize).max(warmup_steps);
        Self {
            lr,
            total_steps,
            warmup_steps,
            decay_start,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let last = self.total_steps.saturating_sub(1);
        if step < self.decay_start || self.decay_start >= last {
            return self.lr;
        }
        let remaining = last.saturating_sub(step) as f64;
        (self.lr * remaining / (last - self.decay_start) as f64).max(0.0)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Negative log-likelihood of one sample given network output `f`, and its
/// gradient with respect to `f`.
fn sample_nll(task: Task, f: &[f64], y: &Targets, i: usize) -> (f64, Vec<f64>) {
    match (task, y) {
        (Task::Regression { sigma }, Targets::Real(m)) => {
            let var = sigma * sigma;
            let mut nll = 0.0;
            let grad = f
                .iter()
                .enumerate()
                .map(|(c, fc)| {
                    let r = fc - m[(i, c)];
                    nll += 0.5 * r * r / var + 0.5 * (2.0 * std::f64::consts::PI * var).ln();
                    r / var
                })
                .collect();
            (nll, grad)
        }
        (Task::Classification { .. }, Targets::Labels(l)) => {
            let label = l[i];
            let mut grad = softmax(f);
            grad[label] -= 1.0;
            (log_sum_exp(f) - f[label], grad)
        }
        _ => unreachable!("dataset invariants tie target kind to task"),
    }
}

/// Sum of per-sample negative log-likelihoods over `batch` and its gradient.
fn nll_and_grad(net: &Network, data: &Dataset, rows: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.param_count()];
    let mut total = 0.0;
    let mut x = vec![0.0; data.input_dim()];
    for &i in rows {
        for (j, v) in x.iter_mut().enumerate() {
            *v = data.x[(i, j)];
        }
        let trace = net.forward_trace(&x);
        let (nll, g_out) = sample_nll(data.task, trace.output(), &data.y, i);
        total += nll;
        net.vjp_into(&trace, &g_out, &mut grad);
    }
    (total, grad)
}

/// Unnormalized negative log-posterior `−Σ ln p(yᵢ|xᵢ,θ) + (λ/2)‖θ‖²`.
pub fn loss(net: &Network, batch: &Dataset, prior_precision: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("loss needs a nonempty batch".into()));
    }
    let mut total = 0.0;
    let mut x = vec![0.0; batch.input_dim()];
    for i in 0..batch.len() {
        for (j, v) in x.iter_mut().enumerate() {
            *v = batch.x[(i, j)];
        }
        total += sample_nll(batch.task, &net.forward_sample(&x), &batch.y, i).0;
    }
    Ok(total + 0.5 * prior_precision * net.theta.norm_squared())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Network,
    pub trace: Vec<EpochLoss>,
}

/// One SGD step on the per-sample-averaged objective. The prior term is
/// applied implicitly (`θ ← (θ − η g)/(1 + ηλ/N)`), which has the same
/// fixed points as the explicit step and stays stable for large λ.
fn sgd_step(net: &mut Network, data: &Dataset, rows: &[usize], lr: f64, prior_precision: f64) -> f64 {
    let (nll, grad) = nll_and_grad(net, data, rows);
    let b = rows.len() as f64;
    let shrink = 1.0 + lr * prior_precision / data.len() as f64;
    for (t, g) in net.theta.iter_mut().zip(&grad) {
        *t = (*t - lr * g / b) / shrink;
    }
    nll
}

fn batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if batch_size == 0 || batch_size >= n {
        return vec![idx];
    }
    idx.shuffle(rng);
    idx.chunks(batch_size).map(|c| c.to_vec()).collect()
}

fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    if batch_size == 0 || batch_size >= n {
        1
    } else {
        n.div_ceil(batch_size)
    }
}

/// Trains `net` towards the MAP estimate. Returns the final parameters and
/// the per-epoch loss trace (full-data unnormalized negative log-posterior).
pub fn train_map(
    net: &Network,
    train: &Dataset,
    cfg: &TrainConfig,
    test: Option<&Dataset>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let schedule = LrSchedule::new(
        cfg.lr,
        cfg.epochs * batches_per_epoch(train.len(), cfg.batch_size),
        cfg.warmup_frac,
        cfg.decay_frac,
    );
    let mut step = 0;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        for rows in batches(train.len(), cfg.batch_size, &mut rng) {
            sgd_step(&mut net, train, &rows, schedule.at(step), cfg.prior_precision);
            step += 1;
        }
        let train_loss = loss(&net, train, cfg.prior_precision)?;
        if !train_loss.is_finite() || net.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let test_loss = test.map(|t| loss(&net, t, cfg.prior_precision)).transpose()?;
        trace.push(EpochLoss {
            epoch,
            train_loss,
            test_loss,
        });
    }
    Ok(TrainOutcome { net, trace })
}

pub fn write_loss_trace(path: &Path, trace: &[EpochLoss]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,test_loss\n");
    for e in trace {
        let test = e.test_loss.map(|v| format!("{v:?}")).unwrap_or_default();
        out.push_str(&format!("{},{:?},{}\n", e.epoch, e.train_loss, test));
    }
    crate::io::write_atomic(path, out.as_bytes())
}

/// `σ̂ = √(mean squared training residual)`, averaged over samples and outputs.
pub fn estimate_sigma(net: &Network, train: &Dataset) -> Result<f64> {
    let Targets::Real(y) = &train.y else {
        return Err(Error::Unsupported(
            "noise estimation applies to regression only".into(),
        ));
    };
    let f = net.forward(&train.x)?;
    let c = y.ncols();
    let mut sq = 0.0;
    for i in 0..y.nrows() {
        for k in 0..c {
            sq += (f[i * c + k] - y[(i, k)]).powi(2);
        }
    }
    Ok((sq / (y.nrows() * c) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwagConfig {
    pub steps: usize,
    pub snapshot_every: usize,
    pub constant_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SwagConfig {
    fn default() -> Self {
        Self {
            steps: 400,
            snapshot_every: 20,
            constant_lr: 1e-2,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl SwagConfig {
    /// One snapshot per epoch over `epochs` epochs.
    pub fn per_epoch(epochs: usize, lr: f64, batch_size: usize, n_train: usize, seed: u64) -> Self {
        let per = batches_per_epoch(n_train, batch_size);
        Self {
            steps: epochs * per,
            snapshot_every: per,
            constant_lr: lr,
            batch_size,
            seed,
        }
    }
}

/// Streaming first and second moments of parameter snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SwagStats {
    pub mean: DVector<f64>,
    pub second_moment: DVector<f64>,
    pub snapshots: usize,
}

impl SwagStats {
    pub fn new(p: usize) -> Self {
        Self {
            mean: DVector::zeros(p),
            second_moment: DVector::zeros(p),
            snapshots: 0,
        }
    }

    pub fn push(&mut self, theta: &DVector<f64>) {
        self.snapshots += 1;
        let w = 1.0 / self.snapshots as f64;
        for ((m, s), t) in self
            .mean
            .iter_mut()
            .zip(self.second_moment.iter_mut())
            .zip(theta.iter())
        {
            *m += (t - *m) * w;
            *s += (t * t - *s) * w;
        }
    }

    /// `second_moment − mean²`, clamped at zero.
    pub fn variance(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.mean.len(),
            self.mean
                .iter()
                .zip(self.second_moment.iter())
                .map(|(m, s)| (s - m * m).max(0.0)),
        )
    }
}

/// Constant-rate SGD started from `net` (left untouched), snapshotting the
/// iterate every `snapshot_every` steps.
pub fn run_swag(
    net: &Network,
    train: &Dataset,
    cfg: &SwagConfig,
    prior_precision: f64,
) -> Result<SwagStats> {
    if cfg.snapshot_every == 0 || cfg.steps / cfg.snapshot_every < 2 {
        return Err(Error::Argument(format!(
            "SWAG with {} steps and snapshot_every = {} yields fewer than 2 snapshots",
            cfg.steps, cfg.snapshot_every
        )));
    }
    let mut work = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = SwagStats::new(net.param_count());
    let mut step = 0;
    'outer: loop {
        for rows in batches(train.len(), cfg.batch_size, &mut rng) {
            sgd_step(&mut work, train, &rows, cfg.constant_lr, prior_precision);
            step += 1;
            if step % cfg.snapshot_every == 0 {
                stats.push(&work.theta);
            }
            if step >= cfg.steps {
                break 'outer;
            }
        }
    }
    if work.theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            epoch: step,
            loss: f64::NAN,
        });
    }
    Ok(stats)
}
