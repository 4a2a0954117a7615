//! Datasets: CSV ingestion, synthetic generators, standardization and
//! seeded train/test splits with construction and evaluation subsets.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Likelihood family of a dataset. For regression `sigma` is the Gaussian
/// noise standard deviation (in standardized target units once the data
/// is normalized).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Regression { sigma: f64 },
    Classification { classes: usize },
}

impl Task {
    pub fn is_regression(&self) -> bool {
        matches!(self, Task::Regression { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// `n × C` real targets.
    Real(DenseMatrix),
    /// Class index per sample.
    Labels(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: Targets,
    pub task: Task,
}

impl Dataset {
    pub fn new(x: DenseMatrix, y: Targets, task: Task) -> Result<Self> {
        let rows = match &y {
            Targets::Real(m) => m.nrows(),
            Targets::Labels(l) => l.len(),
        };
        if rows != x.nrows() {
            return Err(Error::Dimension(format!(
                "{} input rows but {rows} targets",
                x.nrows()
            )));
        }
        match (&y, task) {
            (Targets::Real(m), Task::Regression { sigma }) => {
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("non-finite regression target".into()));
                }
                if !(sigma >= 0.0) {
                    return Err(Error::Argument(format!("noise std {sigma} must be >= 0")));
                }
            }
            (Targets::Labels(l), Task::Classification { classes }) => {
                if classes < 2 {
                    return Err(Error::Argument("classification needs C >= 2".into()));
                }
                if let Some(bad) = l.iter().find(|&&c| c >= classes) {
                    return Err(Error::Argument(format!(
                        "class index {bad} outside [0, {classes})"
                    )));
                }
            }
            _ => {
                return Err(Error::Argument(
                    "target kind does not match the task".into(),
                ))
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite input feature".into()));
        }
        Ok(Self { x, y, task })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    /// Number of network outputs C.
    pub fn output_dim(&self) -> usize {
        match (&self.y, self.task) {
            (Targets::Real(m), _) => m.ncols(),
            (_, Task::Classification { classes }) => classes,
            _ => unreachable!(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let x = DenseMatrix::from_fn(indices.len(), self.x.ncols(), |i, j| {
            self.x[(indices[i], j)]
        });
        let y = match &self.y {
            Targets::Real(m) => {
                Targets::Real(DenseMatrix::from_fn(indices.len(), m.ncols(), |i, j| {
                    m[(indices[i], j)]
                }))
            }
            Targets::Labels(l) => Targets::Labels(indices.iter().map(|&i| l[i]).collect()),
        };
        Dataset {
            x,
            y,
            task: self.task,
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> Dataset {
        let mut out = self.clone();
        if let Task::Regression { .. } = out.task {
            out.task = Task::Regression { sigma };
        }
        out
    }

    /// Writes inputs followed by targets, with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.input_dim()).map(|j| format!("x{j}")).collect();
        match &self.y {
            Targets::Real(m) => header.extend((0..m.ncols()).map(|j| format!("y{j}"))),
            Targets::Labels(_) => header.push("label".into()),
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format!("{v:?}")).collect();
            match &self.y {
                Targets::Real(m) => rec.extend(m.row(i).iter().map(|v| format!("{v:?}"))),
                Targets::Labels(l) => rec.push(l[i].to_string()),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a comma-separated numeric table. Columns listed in
/// `target_columns` become targets, the rest become input features.
/// Classification expects exactly one target column holding class indices.
pub fn load_csv(
    path: &Path,
    target_columns: &[usize],
    task: Task,
    has_header: bool,
) -> Result<Dataset> {
    if target_columns.is_empty() {
        return Err(Error::Argument("at least one target column required".into()));
    }
    if !task.is_regression() && target_columns.len() != 1 {
        return Err(Error::Argument(
            "classification takes exactly one label column".into(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{}: {other:?}", path.display())),
        })?;

    let parse_err = |row: usize, col: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        col,
        msg,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (r, record) in reader.records().enumerate() {
        // 1-based line number in the file
        let line = r + 1 + usize::from(has_header);
        let record = record.map_err(|e| parse_err(line, 0, e.to_string()))?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(parse_err(
                line,
                record.len().min(expected) + 1,
                format!("expected {expected} fields, found {}", record.len()),
            ));
        }
        let mut values = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, c + 1, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, c + 1, format!("'{cell}' is not finite")));
            }
            values.push(v);
        }
        rows.push(values);
    }
    let width = width.unwrap_or(0);
    if let Some(&bad) = target_columns.iter().find(|&&c| c >= width) {
        return Err(Error::Argument(format!(
            "target column {bad} outside the {width} columns of {}",
            path.display()
        )));
    }
    let feature_cols: Vec<usize> = (0..width).filter(|c| !target_columns.contains(c)).collect();
    let n = rows.len();
    let x = DenseMatrix::from_fn(n, feature_cols.len(), |i, j| rows[i][feature_cols[j]]);
    let y = match task {
        Task::Regression { .. } => Targets::Real(DenseMatrix::from_fn(
            n,
            target_columns.len(),
            |i, j| rows[i][target_columns[j]],
        )),
        Task::Classification { .. } => {
            let col = target_columns[0];
            let mut labels = Vec::with_capacity(n);
            for (i, row) in rows.iter().enumerate() {
                let v = row[col];
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(parse_err(
                        i + 1 + usize::from(has_header),
                        col + 1,
                        format!("label {v} is not a class index"),
                    ));
                }
                labels.push(v as usize);
            }
            Targets::Labels(labels)
        }
    };
    Dataset::new(x, y, task)
}

/// `g(x) = sin(x/4)·cos(x/2)`.
pub fn sincos(x: f64) -> f64 {
    (x / 4.0).sin() * (x / 2.0).cos()
}

pub const SINCOS_DEFAULT_SIGMA: f64 = 0.1;

/// Noisy samples of [`sincos`] with inputs uniform on `x_range`.
pub fn synth_sincos(n: usize, sigma: f64, x_range: (f64, f64), seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Argument(format!("sigma {sigma} must be >= 0")));
    }
    let (lo, hi) = x_range;
    if !(hi > lo) {
        return Err(Error::Argument(format!("empty x_range ({lo}, {hi})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| sincos(x) + noise.sample(&mut rng)).collect();
    Dataset::new(
        DenseMatrix::from_column_slice(n, 1, &xs),
        Targets::Real(DenseMatrix::from_column_slice(n, 1, &ys)),
        Task::Regression { sigma },
    )
}

/// Smooth nonlinear regression target over `d` features:
/// `y = sin(x₀) + 0.5·x₁² − 0.3·x₀·x₂ + ε` (missing features count as 0).
pub fn synth_friedman_like(n: usize, d: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Argument("n and d must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let x = DenseMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
    let feat = |i: usize, j: usize| if j < d { x[(i, j)] } else { 0.0 };
    let ys: Vec<f64> = (0..n)
        .map(|i| {
            feat(i, 0).sin() + 0.5 * feat(i, 1).powi(2) - 0.3 * feat(i, 0) * feat(i, 2)
                + noise.sample(&mut rng)
        })
        .collect();
    Dataset::new(
        x,
        Targets::Real(DenseMatrix::from_column_slice(n, 1, &ys)),
        Task::Regression { sigma },
    )
}

/// Gaussian clusters (unit std) with class means at distance `separation`
/// from the origin: `separation·e_c` when `d ≥ C`, otherwise evenly spaced on
/// a circle in the first two coordinates. Labels are `i mod C` before
/// shuffling, so class counts differ by at most one.
pub fn synth_blobs(n: usize, classes: usize, d: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Argument("synth_blobs needs C >= 2".into()));
    }
    if d == 0 || n == 0 {
        return Err(Error::Argument("n and d must be >= 1".into()));
    }
    if d < 2 && classes > 2 {
        return Err(Error::Argument("more than two classes need d >= 2".into()));
    }
    let mean = |c: usize| -> Vec<f64> {
        let mut m = vec![0.0; d];
        if d >= classes {
            m[c] = separation;
        } else if d == 1 {
            m[0] = if c == 0 { -separation } else { separation };
        } else {
            let angle = 2.0 * PI * c as f64 / classes as f64;
            m[0] = separation * angle.cos();
            m[1] = separation * angle.sin();
        }
        m
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let means: Vec<Vec<f64>> = (0..classes).map(mean).collect();
    let mut x = DenseMatrix::zeros(n, d);
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..d {
            x[(i, j)] = means[c][j] + std_normal.sample(&mut rng);
        }
    }
    Dataset::new(x, Targets::Labels(labels), Task::Classification { classes })
}

/// Per-column affine standardization, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    /// Present for regression targets.
    pub y_mean: Option<Vec<f64>>,
    pub y_std: Option<Vec<f64>>,
}

const STD_FLOOR: f64 = 1e-12;

fn column_stats(m: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows() as f64;
    m.column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt().max(STD_FLOOR))
        })
        .unzip()
}

fn apply_stats(m: &DenseMatrix, mean: &[f64], std: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - mean[j]) / std[j])
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.len() < 2 {
            return Err(Error::Argument("normalization needs n >= 2".into()));
        }
        let (x_mean, x_std) = column_stats(&ds.x);
        let (y_mean, y_std) = match &ds.y {
            Targets::Real(m) => {
                let (a, b) = column_stats(m);
                (Some(a), Some(b))
            }
            Targets::Labels(_) => (None, None),
        };
        Ok(Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        })
    }

    /// Standardizes features and real targets. Regression noise std is
    /// rescaled into standardized target units (single-output scale).
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.input_dim() != self.x_mean.len() {
            return Err(Error::Dimension(format!(
                "dataset has {} features, standardizer {}",
                ds.input_dim(),
                self.x_mean.len()
            )));
        }
        let x = apply_stats(&ds.x, &self.x_mean, &self.x_std);
        let (y, task) = match (&ds.y, &self.y_mean, &self.y_std, ds.task) {
            (Targets::Real(m), Some(mean), Some(std), Task::Regression { sigma }) => {
                let scale = std.iter().sum::<f64>() / std.len() as f64;
                (
                    Targets::Real(apply_stats(m, mean, std)),
                    Task::Regression {
                        sigma: sigma / scale,
                    },
                )
            }
            (y, _, _, task) => (y.clone(), task),
        };
        Dataset::new(x, y, task)
    }
}

/// Standardizes `ds` with its own statistics.
pub fn normalize(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    let stats = Standardizer::fit(ds)?;
    Ok((stats.apply(ds)?, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    /// n′, the training subset used to construct low-rank projectors.
    pub construction_subset_size: usize,
    /// n, the test subset on which covariances are evaluated.
    pub eval_subset_size: usize,
    pub seed: u64,
}

impl SplitConfig {
    /// Defaults: regression n′ = min(1000, |train|); classification n′·C ≤ 1000.
    /// The evaluation subset defaults to the same size, capped by the test split.
    pub fn with_defaults(n: usize, train_fraction: f64, task: Task, seed: u64) -> Self {
        let n_train = ((n as f64) * train_fraction).round() as usize;
        let n_test = n - n_train;
        let construction = match task {
            Task::Regression { .. } => n_train.min(1000),
            Task::Classification { classes } => n_train.min(1000 / classes),
        };
        Self {
            train_fraction,
            construction_subset_size: construction,
            eval_subset_size: construction.min(n_test),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    /// X′ with targets, drawn from `train`.
    pub construction: Dataset,
    /// X with targets, drawn from `test`.
    pub eval: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Positions inside `train`.
    pub construction_indices: Vec<usize>,
    /// Positions inside `test`.
    pub eval_indices: Vec<usize>,
}

pub fn split_and_subset(ds: &Dataset, cfg: &SplitConfig) -> Result<Split> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "train_fraction {} outside (0, 1)",
            cfg.train_fraction
        )));
    }
    let n = ds.len();
    let n_train = ((n as f64) * cfg.train_fraction).round() as usize;
    let n_test = n - n_train;
    if cfg.construction_subset_size > n_train {
        return Err(Error::Argument(format!(
            "construction subset {} larger than train split {n_train}",
            cfg.construction_subset_size
        )));
    }
    if cfg.eval_subset_size > n_test {
        return Err(Error::Argument(format!(
            "evaluation subset {} larger than test split {n_test}",
            cfg.eval_subset_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let train_indices = perm[..n_train].to_vec();
    let test_indices = perm[n_train..].to_vec();

    let mut pick = |len: usize, k: usize| {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut rng);
        idx.truncate(k);
        idx
    };
    let construction_indices = pick(n_train, cfg.construction_subset_size);
    let eval_indices = pick(n_test, cfg.eval_subset_size);

    let train = ds.subset(&train_indices);
    let test = ds.subset(&test_indices);
    Ok(Split {
        construction: train.subset(&construction_indices),
        eval: test.subset(&eval_indices),
        train,
        test,
        train_indices,
        test_indices,
        construction_indices,
        eval_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn csv_smoke() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "a.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let ds = load_csv(&path, &[2], Task::Regression { sigma: 1.0 }, true).unwrap();
        assert_eq!((ds.len(), ds.input_dim(), ds.output_dim()), (3, 2, 1));
        assert_eq!(ds.x[(1, 1)], 5.0);
    }

    #[test]
    fn csv_nan_cell_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "a.csv", "1,2,3\n4,NaN,6\n");
        let err = load_csv(&path, &[2], Task::Regression { sigma: 1.0 }, false).unwrap_err();
        match err {
            Error::Parse { row, col, .. } => assert_eq!((row, col), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_and_text_cells() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = write_file(&dir, "r.csv", "1,2,3\n4,5\n");
        assert!(matches!(
            load_csv(&ragged, &[2], Task::Regression { sigma: 1.0 }, false),
            Err(Error::Parse { row: 2, .. })
        ));
        let text = write_file(&dir, "t.csv", "1,abc,3\n");
        assert!(matches!(
            load_csv(&text, &[2], Task::Regression { sigma: 1.0 }, false),
            Err(Error::Parse { row: 1, col: 2, .. })
        ));
        let missing = dir.path().join("missing.csv");
        assert!(matches!(
            load_csv(&missing, &[0], Task::Regression { sigma: 1.0 }, false),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn csv_classification_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "c.csv", "0.5,1\n-0.5,0\n0.1,2\n");
        let ds = load_csv(&path, &[1], Task::Classification { classes: 3 }, false).unwrap();
        assert_eq!(ds.y, Targets::Labels(vec![1, 0, 2]));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_friedman_like(20, 3, 0.3, 4).unwrap();
        let path = dir.path().join("rt.csv");
        ds.write_csv(&path).unwrap();
        let back = load_csv(&path, &[3], ds.task, true).unwrap();
        let diff = (&back.x - &ds.x).abs().max();
        assert!(diff <= 1e-12);
        let (Targets::Real(a), Targets::Real(b)) = (&back.y, &ds.y) else {
            panic!()
        };
        assert!((a - b).abs().max() <= 1e-12);
    }

    #[test]
    fn sincos_values() {
        assert_eq!(sincos(0.0), 0.0);
        assert!((sincos(2.0 * PI) + 1.0).abs() < 1e-15);
        let ds = synth_sincos(5, 0.0, (-10.0, 10.0), 1).unwrap();
        let Targets::Real(y) = &ds.y else { panic!() };
        for i in 0..5 {
            assert_eq!(y[(i, 0)], sincos(ds.x[(i, 0)]));
        }
    }

    #[test]
    fn sincos_noise_is_centered() {
        let n = 100_000;
        let sigma = SINCOS_DEFAULT_SIGMA;
        let ds = synth_sincos(n, sigma, (-10.0, 10.0), 7).unwrap();
        let Targets::Real(y) = &ds.y else { panic!() };
        let mean: f64 = (0..n).map(|i| y[(i, 0)] - sincos(ds.x[(i, 0)])).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn blobs_balanced() {
        let ds = synth_blobs(101, 4, 5, 3.0, 2).unwrap();
        let Targets::Labels(l) = &ds.y else { panic!() };
        let mut counts = [0usize; 4];
        for &c in l {
            counts[c] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn normalize_constant_and_random_columns() {
        let x = DenseMatrix::from_fn(10, 2, |i, j| if j == 0 { 3.0 } else { i as f64 * 1.7 - 2.0 });
        let y = DenseMatrix::from_fn(10, 1, |i, _| (i * i) as f64);
        let ds = Dataset::new(x, Targets::Real(y), Task::Regression { sigma: 1.0 }).unwrap();
        let (norm, _) = normalize(&ds).unwrap();
        assert!(norm.x.column(0).iter().all(|&v| v == 0.0));
        let (m, s) = column_stats(&norm.x.columns(1, 1).into_owned());
        assert!(m[0].abs() < 1e-10 && (s[0] - 1.0).abs() < 1e-10);

        let (again, _) = normalize(&norm).unwrap();
        assert!((&again.x - &norm.x).abs().max() < 1e-12);
    }

    #[test]
    fn normalize_needs_two_rows() {
        let ds = synth_sincos(1, 0.1, (-1.0, 1.0), 0).unwrap();
        assert!(normalize(&ds).is_err());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = synth_sincos(100, 0.1, (-5.0, 5.0), 3).unwrap();
        let cfg = SplitConfig {
            train_fraction: 0.8,
            construction_subset_size: 30,
            eval_subset_size: 10,
            seed: 42,
        };
        let a = split_and_subset(&ds, &cfg).unwrap();
        let b = split_and_subset(&ds, &cfg).unwrap();
        assert_eq!(a.train_indices, b.train_indices);
        assert_eq!(a.eval_indices, b.eval_indices);
        assert_eq!(a.train.len(), 80);
        assert!(a.construction_indices.iter().all(|&i| i < 80));
        assert!(a.eval_indices.iter().all(|&i| i < 20));
        assert!(a.train_indices.iter().all(|i| !a.test_indices.contains(i)));
    }

    #[test]
    fn split_rejects_oversized_subsets() {
        let ds = synth_sincos(10, 0.1, (-5.0, 5.0), 3).unwrap();
        let cfg = SplitConfig {
            train_fraction: 0.5,
            construction_subset_size: 6,
            eval_subset_size: 1,
            seed: 0,
        };
        assert!(matches!(split_and_subset(&ds, &cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn default_subset_sizes() {
        let reg = SplitConfig::with_defaults(5000, 0.8, Task::Regression { sigma: 1.0 }, 0);
        assert_eq!(reg.construction_subset_size, 1000);
        let cls = SplitConfig::with_defaults(5000, 0.8, Task::Classification { classes: 10 }, 0);
        assert_eq!(cls.construction_subset_size, 100);
    }
}
