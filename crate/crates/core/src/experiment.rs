//! Config-driven experiment pipeline: data → MAP training → curvature →
//! posteriors → projectors → metrics, swept over subspace sizes and seeds.
//!
//! Every seed writes into `output_dir/seed-<k>/`. Checkpoints, curvature
//! factors and SWAG variances are cached there and reused as long as the
//! stage-relevant part of the config is unchanged.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_factor, ggn_diag, kfac_factors, CurvatureFactor};
use crate::data::{
    load_csv, split_and_subset, synth_blobs, synth_friedman_like, synth_sincos, Dataset, Split, SplitConfig,
    Standardizer, Task,
};
use crate::error::{Error, Result};
use crate::io::{read_matrix, write_atomic, write_matrix};
use crate::linalg::DenseMatrix;
use crate::metrics::{
    aggregate, dead_parameter_fraction, log_trace, nll, nll_diagonal, ordering_counts, read_reports,
    relative_error, write_aggregate, write_reports, AgreementCounts, MetricsReport,
};
use crate::model::{Jacobian, Network, NetworkSpec};
use crate::posterior::PosteriorApprox;
use crate::predictive::{
    epistemic_cov_full, epistemic_cov_subspace, predict_classification_probit, predict_regression, EpistemicCov,
    PredictiveDist,
};
use crate::subspace::{full_projector, subset_projector, LowrankBasis, Projector, ProjectorKind};
use crate::train::{estimate_sigma, run_swag, train_map, write_loss_trace, SwagConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Sincos {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_sincos_sigma")]
        sigma: f64,
        #[serde(default = "default_x_min")]
        x_min: f64,
        #[serde(default = "default_x_max")]
        x_max: f64,
        #[serde(default)]
        seed: u64,
    },
    Friedman {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_friedman_d")]
        d: usize,
        #[serde(default = "default_sincos_sigma")]
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    Blobs {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_blob_d")]
        d: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        target_columns: Vec<usize>,
        /// Number of classes; absent means regression.
        #[serde(default)]
        classes: Option<usize>,
        /// Noise std in raw target units; absent means 1 in standardized units.
        #[serde(default)]
        sigma: Option<f64>,
        #[serde(default = "default_true")]
        has_header: bool,
    },
}

fn default_n() -> usize {
    250
}
fn default_sincos_sigma() -> f64 {
    crate::data::SINCOS_DEFAULT_SIGMA
}
fn default_x_min() -> f64 {
    -3.0
}
fn default_x_max() -> f64 {
    3.0
}
fn default_friedman_d() -> usize {
    4
}
fn default_classes() -> usize {
    3
}
fn default_blob_d() -> usize {
    2
}
fn default_separation() -> f64 {
    2.0
}
fn default_true() -> bool {
    true
}

impl DatasetSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DatasetSpec::Sincos { .. } => "sincos",
            DatasetSpec::Friedman { .. } => "friedman",
            DatasetSpec::Blobs { .. } => "blobs",
            DatasetSpec::Csv { .. } => "csv",
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Sincos {
                n,
                sigma,
                x_min,
                x_max,
                seed,
            } => synth_sincos(*n, *sigma, (*x_min, *x_max), *seed),
            DatasetSpec::Friedman { n, d, sigma, seed } => synth_friedman_like(*n, *d, *sigma, *seed),
            DatasetSpec::Blobs {
                n,
                classes,
                d,
                separation,
                seed,
            } => synth_blobs(*n, *classes, *d, *separation, *seed),
            DatasetSpec::Csv {
                path,
                target_columns,
                classes,
                sigma,
                has_header,
            } => {
                let task = match classes {
                    Some(c) => Task::Classification { classes: *c },
                    None => Task::Regression {
                        sigma: sigma.unwrap_or(1.0),
                    },
                };
                load_csv(path, target_columns, task, *has_header)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 128] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train_fraction: f64,
    /// n′; defaults to min(1000, |train|) (classification: n′·C ≤ 1000).
    pub construction_size: Option<usize>,
    /// n; defaults to n′ capped by the test split.
    pub eval_size: Option<usize>,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            construction_size: None,
            eval_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwagSettings {
    pub epochs: usize,
    /// Constant rate; defaults to the training rate.
    pub lr: Option<f64>,
    pub batch_size: usize,
}

impl Default for SwagSettings {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: None,
            batch_size: 32,
        }
    }
}

/// Noise scale used for regression curvature and predictives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// `σ̂` from the training residuals of the MAP.
    #[default]
    Estimated,
    /// The dataset's own `σ`.
    Known,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label in the `dataset` column; defaults to the dataset kind.
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub network: NetworkConfig,
    /// `train.prior_precision` is ignored in favour of `prior_precision`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub swag: SwagSettings,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default = "default_prior")]
    pub prior_precision: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<ProjectorKind>,
    pub s_grid: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_dead_threshold")]
    pub dead_threshold: f64,
    #[serde(default)]
    pub noise: NoiseMode,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_prior() -> f64 {
    1.0
}
fn default_methods() -> Vec<ProjectorKind> {
    ProjectorKind::ALL.to_vec()
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_rank_tol() -> f64 {
    crate::subspace::DEFAULT_RANK_TOL
}
fn default_dead_threshold() -> f64 {
    crate::metrics::DEFAULT_DEAD_THRESHOLD
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Table =
            toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config and applies `key.path=value` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        // relative CSV paths are relative to the config file
        if let DatasetSpec::Csv { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(parent) = path.parent() {
                    *data = parent.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Argument("at least one projector kind required".into()));
        }
        if self.s_grid.is_empty() || self.s_grid.contains(&0) {
            return Err(Error::Argument("s_grid must be non-empty with entries >= 1".into()));
        }
        if self.s_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("s_grid must be strictly ascending".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Argument("at least one seed required".into()));
        }
        if !(self.prior_precision > 0.0 && self.prior_precision.is_finite()) {
            return Err(Error::Argument(format!(
                "prior_precision must be positive, got {}",
                self.prior_precision
            )));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::Argument(format!("rank_tol {} outside (0, 1)", self.rank_tol)));
        }
        self.train_config(0).validate()
    }

    pub fn dataset_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.dataset.kind_name().to_string())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            prior_precision: self.prior_precision,
            seed,
            ..self.train.clone()
        }
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed-{seed}"))
    }

    /// Everything the cached stages depend on.
    fn stage_key(&self, seed: u64) -> String {
        serde_json::json!({
            "dataset": self.dataset,
            "network": self.network,
            "train": self.train_config(seed),
            "swag": self.swag,
            "split": self.split,
            "normalize": self.normalize,
            "noise": self.noise,
        })
        .to_string()
    }
}

/// Applies one `a.b.c=value` override. The value is parsed as TOML and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("override '{assignment}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Argument(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Argument(format!("override '{key}': '{part}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Standardized splits for one seed.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: Split,
    pub standardizer: Option<Standardizer>,
}

pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    let raw = cfg.dataset.load()?;
    let mut split_cfg = SplitConfig::with_defaults(raw.len(), cfg.split.train_fraction, raw.task, seed);
    if let Some(n) = cfg.split.construction_size {
        split_cfg.construction_subset_size = n;
    }
    if let Some(n) = cfg.split.eval_size {
        split_cfg.eval_subset_size = n;
    }
    let mut split = split_and_subset(&raw, &split_cfg)?;
    let mut standardizer = None;
    if cfg.normalize {
        let stats = Standardizer::fit(&split.train)?;
        split.train = stats.apply(&split.train)?;
        split.test = stats.apply(&split.test)?;
        split.construction = stats.apply(&split.construction)?;
        split.eval = stats.apply(&split.eval)?;
        standardizer = Some(stats);
    }
    if let DatasetSpec::Csv { sigma: None, .. } = cfg.dataset {
        if split.train.task.is_regression() {
            split.train = split.train.with_sigma(1.0);
            split.test = split.test.with_sigma(1.0);
            split.construction = split.construction.with_sigma(1.0);
            split.eval = split.eval.with_sigma(1.0);
        }
    }
    Ok(PreparedData { split, standardizer })
}

/// Cached stages of one seed.
pub struct SeedStages<'a> {
    pub cfg: &'a ExperimentConfig,
    pub seed: u64,
    pub dir: PathBuf,
    pub data: PreparedData,
    cache_valid: bool,
}

impl<'a> SeedStages<'a> {
    pub fn new(cfg: &'a ExperimentConfig, seed: u64) -> Result<Self> {
        let dir = cfg.seed_dir(seed);
        fs::create_dir_all(&dir)?;
        let key = cfg.stage_key(seed);
        let key_path = dir.join("stage.json");
        let cache_valid = fs::read_to_string(&key_path).map(|k| k == key).unwrap_or(false);
        if !cache_valid {
            for stale in ["model.json", "curvature.bin", "swag_variance.bin", "loss.csv"] {
                let _ = fs::remove_file(dir.join(stale));
            }
            write_atomic(&key_path, key.as_bytes())?;
        }
        let data = prepare_data(cfg, seed)?;
        Ok(Self {
            cfg,
            seed,
            dir,
            data,
            cache_valid,
        })
    }

    fn cached(&self, name: &str) -> Option<PathBuf> {
        let path = self.dir.join(name);
        (self.cache_valid && path.exists()).then_some(path)
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let train = &self.data.split.train;
        NetworkSpec::mlp(train.input_dim(), &self.cfg.network.hidden, train.output_dim())
    }

    /// MAP network, trained or loaded from `model.json`.
    pub fn model(&self) -> Result<Network> {
        if let Some(path) = self.cached("model.json") {
            return Network::load(&path);
        }
        let init = Network::init(self.network_spec()?, self.seed);
        let outcome = train_map(
            &init,
            &self.data.split.train,
            &self.cfg.train_config(self.seed),
            Some(&self.data.split.test),
        )?;
        write_loss_trace(&self.dir.join("loss.csv"), &outcome.trace)?;
        outcome.net.save(&self.dir.join("model.json"))?;
        Ok(outcome.net)
    }

    /// Regression noise scale used downstream; `None` for classification.
    pub fn sigma(&self, net: &Network) -> Result<Option<f64>> {
        match self.data.split.train.task {
            Task::Classification { .. } => Ok(None),
            Task::Regression { sigma } => match self.cfg.noise {
                NoiseMode::Known => Ok(Some(sigma)),
                NoiseMode::Estimated => {
                    let est = estimate_sigma(net, &self.data.split.train)?;
                    if !(est > 0.0) {
                        return Err(Error::Numeric("estimated noise scale is zero".into()));
                    }
                    Ok(Some(est))
                }
            },
        }
    }

    /// Training set with the downstream noise scale.
    pub fn curvature_data(&self, sigma: Option<f64>) -> Dataset {
        match sigma {
            Some(s) => self.data.split.train.with_sigma(s),
            None => self.data.split.train.clone(),
        }
    }

    pub fn curvature(&self, net: &Network, sigma: Option<f64>) -> Result<CurvatureFactor> {
        if let Some(path) = self.cached("curvature.bin") {
            return CurvatureFactor::load(&path);
        }
        let factor = curvature_factor(net, &self.curvature_data(sigma))?;
        factor.save(&self.dir.join("curvature.bin"))?;
        Ok(factor)
    }

    pub fn swag_variance(&self, net: &Network) -> Result<DVector<f64>> {
        if let Some(path) = self.cached("swag_variance.bin") {
            let m = read_matrix(&path)?;
            return Ok(DVector::from_column_slice(m.as_slice()));
        }
        let train = &self.data.split.train;
        let swag = SwagConfig::per_epoch(
            self.cfg.swag.epochs,
            self.cfg.swag.lr.unwrap_or(self.cfg.train.lr),
            self.cfg.swag.batch_size,
            train.len(),
            self.seed.wrapping_add(0x5eed),
        );
        let var = run_swag(net, train, &swag, self.cfg.prior_precision)?.variance();
        write_matrix(
            &self.dir.join("swag_variance.bin"),
            &DenseMatrix::from_column_slice(var.len(), 1, var.as_slice()),
        )?;
        Ok(var)
    }
}

/// Everything needed to build and score projectors for one seed.
pub struct SeedContext<'a> {
    pub stages: SeedStages<'a>,
    pub net: Network,
    pub sigma: Option<f64>,
    pub factor: CurvatureFactor,
    pub full_post: PosteriorApprox,
    pub jac_eval: Jacobian,
    pub sigma_x: EpistemicCov,
    jac_construction: OnceCell<Jacobian>,
    diag_post: OnceCell<PosteriorApprox>,
    kfac_post: OnceCell<PosteriorApprox>,
    swag_var: OnceCell<DVector<f64>>,
    bases: BTreeMap<ProjectorKind, OnceCell<LowrankBasis>>,
}

/// Outcome of a projector request.
pub enum Built {
    Ready(Projector),
    /// Not applicable at this `s`; carries the reason.
    Skipped(String),
}

impl<'a> SeedContext<'a> {
    pub fn new(stages: SeedStages<'a>) -> Result<Self> {
        let net = stages.model()?;
        let sigma = stages.sigma(&net)?;
        let factor = stages.curvature(&net, sigma)?;
        let full_post = PosteriorApprox::full(&factor, stages.cfg.prior_precision)?;
        let jac_eval = net.jacobian(&stages.data.split.eval.x)?;
        let sigma_x = epistemic_cov_full(&jac_eval, &full_post)?;
        let bases = ProjectorKind::ALL
            .into_iter()
            .filter(|k| k.posterior_kind().is_some())
            .map(|k| (k, OnceCell::new()))
            .collect();
        Ok(Self {
            stages,
            net,
            sigma,
            factor,
            full_post,
            jac_eval,
            sigma_x,
            jac_construction: OnceCell::new(),
            diag_post: OnceCell::new(),
            kfac_post: OnceCell::new(),
            swag_var: OnceCell::new(),
            bases,
        })
    }

    fn prior(&self) -> f64 {
        self.stages.cfg.prior_precision
    }

    fn get_or_try<T>(cell: &OnceCell<T>, f: impl FnOnce() -> Result<T>) -> Result<&T> {
        if let Some(v) = cell.get() {
            return Ok(v);
        }
        let v = f()?;
        Ok(cell.get_or_init(|| v))
    }

    fn jac_construction(&self) -> Result<&Jacobian> {
        Self::get_or_try(&self.jac_construction, || {
            self.net.jacobian(&self.stages.data.split.construction.x)
        })
    }

    pub fn diagonal_posterior(&self) -> Result<&PosteriorApprox> {
        Self::get_or_try(&self.diag_post, || {
            PosteriorApprox::diagonal(&ggn_diag(&self.factor)?, self.prior())
        })
    }

    pub fn kfac_posterior(&self) -> Result<&PosteriorApprox> {
        Self::get_or_try(&self.kfac_post, || {
            let data = self.stages.curvature_data(self.sigma);
            PosteriorApprox::kfac(&kfac_factors(&self.net, &data)?, self.prior())
        })
    }

    fn basis(&self, kind: ProjectorKind) -> Result<&LowrankBasis> {
        let cell = &self.bases[&kind];
        Self::get_or_try(cell, || {
            let tol = self.stages.cfg.rank_tol;
            match kind {
                ProjectorKind::LowrankDiagonal => {
                    LowrankBasis::new(self.diagonal_posterior()?, self.jac_construction()?, tol)
                }
                ProjectorKind::LowrankKfac => {
                    LowrankBasis::new(self.kfac_posterior()?, self.jac_construction()?, tol)
                }
                _ => LowrankBasis::new(&self.full_post, &self.jac_eval, tol),
            }
        })
    }

    fn subset_scores(&self, kind: ProjectorKind) -> Result<DVector<f64>> {
        match kind {
            ProjectorKind::SubsetMagnitude => Ok(self.net.theta.abs()),
            ProjectorKind::SubsetDiagonal => self.diagonal_posterior()?.variance_diag(),
            _ => Self::get_or_try(&self.swag_var, || self.stages.swag_variance(&self.net)).cloned(),
        }
    }

    /// Subspace sizes a method is evaluated at.
    pub fn sizes(&self, kind: ProjectorKind) -> Vec<usize> {
        if kind == ProjectorKind::Full {
            vec![self.net.param_count()]
        } else {
            self.stages.cfg.s_grid.clone()
        }
    }

    pub fn projector(&self, kind: ProjectorKind, s: usize) -> Result<Built> {
        let p = self.net.param_count();
        if kind == ProjectorKind::Full {
            return Ok(Built::Ready(full_projector(p)));
        }
        if s > p {
            return Ok(Built::Skipped(format!("s = {s} exceeds p = {p}")));
        }
        if kind.is_subset() {
            return subset_projector(&self.subset_scores(kind)?, s, kind).map(Built::Ready);
        }
        let basis = self.basis(kind)?;
        if s > basis.usable_rank {
            return Ok(Built::Skipped(format!(
                "s = {s} exceeds usable rank {}",
                basis.usable_rank
            )));
        }
        basis.projector(s, kind).map(Built::Ready)
    }

    pub fn evaluate(&self, proj: &Projector) -> Result<MetricsReport> {
        let cov = epistemic_cov_subspace(&self.jac_eval, proj, &self.factor, self.prior())?;
        let rel_error = relative_error(&self.sigma_x, &cov).ok();
        let trace = cov.trace();
        let eval = &self.stages.data.split.eval;
        let pred = match self.sigma {
            Some(sigma) => PredictiveDist::Gaussian(predict_regression(&self.net, &eval.x, &cov, sigma)?),
            None => PredictiveDist::Categorical(predict_classification_probit(&self.net, &eval.x, &cov)?),
        };
        let nll_joint = nll(&pred, &eval.y)?;
        let nll_diag = match pred {
            PredictiveDist::Gaussian(_) => Some(nll_diagonal(&pred, &eval.y)?),
            PredictiveDist::Categorical(_) => None,
        };
        Ok(MetricsReport {
            dataset: self.stages.cfg.dataset_name(),
            method: proj.kind,
            s: proj.s(),
            seed: self.stages.seed,
            rel_error,
            trace,
            log_trace: log_trace(trace),
            nll: nll_joint,
            nll_diag,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct SeedSummary {
    pub seed: u64,
    pub reports: Vec<MetricsReport>,
    pub ok: usize,
    pub skipped: usize,
    pub failed: usize,
    pub dead_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub seeds: Vec<SeedSummary>,
    pub reports: Vec<MetricsReport>,
    pub agreement: AgreementCounts,
}

impl RunSummary {
    pub fn failed(&self) -> usize {
        self.seeds.iter().map(|s| s.failed).sum()
    }

    pub fn all_succeeded(&self) -> bool {
        self.failed() == 0
    }
}

fn cell_count(cfg: &ExperimentConfig) -> usize {
    cfg.methods
        .iter()
        .map(|&k| if k == ProjectorKind::Full { 1 } else { cfg.s_grid.len() })
        .sum()
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, save_projectors: bool) -> SeedSummary {
    let mut summary = SeedSummary {
        seed,
        ..Default::default()
    };
    let ctx = match SeedStages::new(cfg, seed).and_then(SeedContext::new) {
        Ok(ctx) => ctx,
        Err(e) => {
            log::error!("seed {seed}: setup failed: {e}");
            summary.failed = cell_count(cfg);
            return summary;
        }
    };
    match ctx.net.jacobian(&ctx.stages.data.split.train.x).and_then(|j| {
        let report = dead_parameter_fraction(&j, cfg.dead_threshold)?;
        report.write_csv(&ctx.stages.dir.join("sensitivity.csv"))?;
        Ok(report.fraction)
    }) {
        Ok(f) => summary.dead_fraction = Some(f),
        Err(e) => log::warn!("seed {seed}: dead-parameter analysis failed: {e}"),
    }
    for &kind in &cfg.methods {
        for s in ctx.sizes(kind) {
            let cell = ctx.projector(kind, s).and_then(|built| match built {
                Built::Skipped(reason) => Ok(Err(reason)),
                Built::Ready(proj) => {
                    if save_projectors {
                        let dir = ctx.stages.dir.join("projectors");
                        fs::create_dir_all(&dir)?;
                        proj.save(&dir.join(format!("{kind}-s{s}.bin")))?;
                    }
                    ctx.evaluate(&proj).map(Ok)
                }
            });
            match cell {
                Ok(Ok(report)) => {
                    summary.reports.push(report);
                    summary.ok += 1;
                }
                Ok(Err(reason)) => {
                    log::info!("seed {seed}: skipping {kind} at s = {s}: {reason}");
                    summary.skipped += 1;
                }
                Err(e) => {
                    log::error!("seed {seed}: {kind} at s = {s} failed: {e}");
                    summary.failed += 1;
                }
            }
        }
    }
    summary
}

fn run_seeds(cfg: &ExperimentConfig, save_projectors: bool) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut seeds: Vec<SeedSummary> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed, save_projectors))
        .collect();
    seeds.sort_by_key(|s| s.seed);
    let mut reports = Vec::new();
    for s in &seeds {
        write_reports(&cfg.seed_dir(s.seed).join("metrics.csv"), &s.reports)?;
        reports.extend(s.reports.iter().cloned());
    }
    write_reports(&cfg.output_dir.join("metrics.csv"), &reports)?;
    write_aggregate(&cfg.output_dir.join("aggregate.csv"), &aggregate(&reports))?;
    Ok(RunSummary {
        agreement: ordering_counts(&reports),
        seeds,
        reports,
    })
}

/// Full pipeline; writes per-seed and combined `metrics.csv` plus
/// `aggregate.csv` (mean and standard error across seeds).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run_seeds(cfg, false)
}

/// As [`run_experiment`], additionally saving every projector under
/// `seed-<k>/projectors/`.
pub fn run_projection(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run_seeds(cfg, true)
}

/// Trains (or reuses) the MAP network of every seed. Returns the number of
/// seeds that failed.
pub fn run_training(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.validate()?;
    let failures = cfg
        .seeds
        .par_iter()
        .filter(|&&seed| {
            let r = SeedStages::new(cfg, seed).and_then(|s| s.model().map(|_| ()));
            if let Err(e) = &r {
                log::error!("seed {seed}: training failed: {e}");
            }
            r.is_err()
        })
        .count();
    Ok(failures)
}

/// Trains (or reuses) and stores curvature factors. Returns failed seeds.
pub fn run_curvature(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.validate()?;
    let failures = cfg
        .seeds
        .par_iter()
        .filter(|&&seed| {
            let r = SeedStages::new(cfg, seed).and_then(|s| {
                let net = s.model()?;
                let sigma = s.sigma(&net)?;
                s.curvature(&net, sigma).map(|_| ())
            });
            if let Err(e) = &r {
                log::error!("seed {seed}: curvature failed: {e}");
            }
            r.is_err()
        })
        .count();
    Ok(failures)
}

/// Seed-averaged rankings of one `(dataset, s)` group.
#[derive(Debug, Clone)]
pub struct GroupRanking {
    pub dataset: String,
    pub s: usize,
    /// Ascending mean relative error.
    pub by_error: Vec<(ProjectorKind, f64)>,
    /// Descending mean trace.
    pub by_trace: Vec<(ProjectorKind, f64)>,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub groups: Vec<GroupRanking>,
    pub agreement: AgreementCounts,
    pub rows: usize,
    pub skipped_rows: usize,
}

impl ComparisonReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            writeln!(out, "{} s={}", g.dataset, g.s).unwrap();
            let err: Vec<String> = g.by_error.iter().map(|(k, v)| format!("{k} ({v:.4e})")).collect();
            let tr: Vec<String> = g.by_trace.iter().map(|(k, v)| format!("{k} ({v:.4e})")).collect();
            writeln!(out, "  by rel_error: {}", err.join(" < ")).unwrap();
            writeln!(out, "  by trace:     {}", tr.join(" > ")).unwrap();
        }
        match self.agreement.fraction() {
            Some(f) => writeln!(
                out,
                "ordering agreement: {f:.4} ({}/{} pairs)",
                self.agreement.agree, self.agreement.total
            )
            .unwrap(),
            None => writeln!(out, "ordering agreement: n/a (no countable pairs)").unwrap(),
        }
        writeln!(out, "rows: {}, skipped malformed: {}", self.rows, self.skipped_rows).unwrap();
        out
    }
}

/// Metric CSVs under `dir`: the combined `metrics.csv` when present,
/// otherwise every `seed-*/metrics.csv`.
fn report_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let top = dir.join("metrics.csv");
    if top.is_file() {
        return Ok(vec![top]);
    }
    let mut files = Vec::new();
    if dir.is_dir() {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path().join("metrics.csv");
            if path.is_file() {
                files.push(path);
            }
        }
    }
    files.sort();
    Ok(files)
}

pub fn compare_report(dir: &Path) -> Result<ComparisonReport> {
    let files = report_files(dir)?;
    if files.is_empty() {
        return Err(Error::Argument(format!("no metrics CSV under {}", dir.display())));
    }
    let mut reports = Vec::new();
    let mut skipped_rows = 0;
    for f in &files {
        let (rows, skipped) = read_reports(f)?;
        reports.extend(rows);
        skipped_rows += skipped;
    }
    let mut sums: BTreeMap<(String, usize), BTreeMap<ProjectorKind, (f64, f64, usize, usize)>> = BTreeMap::new();
    for r in &reports {
        let e = sums
            .entry((r.dataset.clone(), r.s))
            .or_default()
            .entry(r.method)
            .or_default();
        e.0 += r.trace;
        e.2 += 1;
        if let Some(err) = r.rel_error {
            e.1 += err;
            e.3 += 1;
        }
    }
    let groups = sums
        .into_iter()
        .map(|((dataset, s), methods)| {
            let mut by_error: Vec<(ProjectorKind, f64)> = methods
                .iter()
                .filter(|(_, v)| v.3 > 0)
                .map(|(&k, v)| (k, v.1 / v.3 as f64))
                .collect();
            by_error.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let mut by_trace: Vec<(ProjectorKind, f64)> =
                methods.iter().map(|(&k, v)| (k, v.0 / v.2 as f64)).collect();
            by_trace.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            GroupRanking {
                dataset,
                s,
                by_error,
                by_trace,
            }
        })
        .collect();
    Ok(ComparisonReport {
        groups,
        agreement: ordering_counts(&reports),
        rows: reports.len(),
        skipped_rows,
    })
}
