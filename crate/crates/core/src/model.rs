//! Fully connected ReLU networks with exact per-sample parameter Jacobians.
//!
//! Parameters are stored as one flat vector. Layers are laid out in order;
//! inside a layer the `out × in` weight matrix comes first in row-major
//! order (`w[o][i]` at `offset + o*in + i`), followed by the `out` biases.
//! Subset projectors index into this layout.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative with the `ReLU'(0) = 0` convention.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

/// Shape and parameter offset of one affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_index(&self, out: usize, inp: usize) -> usize {
        self.offset + out * self.fan_in + inp
    }

    pub fn bias_index(&self, out: usize) -> usize {
        self.offset + self.fan_out * self.fan_in + out
    }

    pub fn param_count(&self) -> usize {
        (self.fan_in + 1) * self.fan_out
    }
}

impl NetworkSpec {
    pub fn new(layer_widths: Vec<usize>) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activation: Activation::Relu,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `(d, hidden, hidden, C)` ReLU network.
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self::new(widths)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Argument(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Argument("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    offset,
                };
                offset += shape.param_count();
                shape
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }
}

pub fn param_count(spec: &NetworkSpec) -> usize {
    spec.layer_widths
        .windows(2)
        .map(|w| (w[0] + 1) * w[1])
        .sum()
}

/// Intermediate values of one forward pass: the input of every layer and
/// every layer's pre-activation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub inputs: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.pre_activations.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub theta: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    version: u32,
    layer_widths: Vec<usize>,
    activation: Activation,
    theta: Vec<f64>,
}

const NETWORK_FORMAT: &str = "lowrank-laplace-network";

impl Network {
    pub fn new(spec: NetworkSpec, theta: DVector<f64>) -> Result<Self> {
        spec.validate()?;
        if theta.len() != spec.param_count() {
            return Err(Error::Dimension(format!(
                "theta has length {}, spec needs {}",
                theta.len(),
                spec.param_count()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("theta contains non-finite values".into()));
        }
        Ok(Self { spec, theta })
    }

    pub fn zeros(spec: NetworkSpec) -> Self {
        let p = spec.param_count();
        Self {
            spec,
            theta: DVector::zeros(p),
        }
    }

    /// He-normal weights, zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(spec);
        for layer in net.spec.layers() {
            let std = (2.0 / layer.fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).unwrap();
            for o in 0..layer.fan_out {
                for i in 0..layer.fan_in {
                    net.theta[layer.weight_index(o, i)] = normal.sample(&mut rng);
                }
            }
        }
        net
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn with_theta(&self, theta: DVector<f64>) -> Self {
        Self {
            spec: self.spec.clone(),
            theta,
        }
    }

    fn check_inputs(&self, x: &DenseMatrix) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Argument(format!(
                "inputs have {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("inputs contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        let theta = self.theta.as_slice();
        let layers = self.spec.layers();
        let last = layers.len() - 1;
        let mut inputs = Vec::with_capacity(layers.len());
        let mut pre_activations = Vec::with_capacity(layers.len());
        let mut current = x.to_vec();
        for (l, layer) in layers.iter().enumerate() {
            let mut z = vec![0.0; layer.fan_out];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &theta[layer.weight_index(o, 0)..layer.weight_index(o, 0) + layer.fan_in];
                *zo = row.iter().zip(&current).map(|(w, a)| w * a).sum::<f64>()
                    + theta[layer.bias_index(o)];
            }
            let next = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.spec.activation.apply(v)).collect()
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre_activations.push(z);
        }
        ForwardTrace {
            inputs,
            pre_activations,
        }
    }

    pub fn forward_sample(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).output().to_vec()
    }

    /// Outputs for all rows of `x`, concatenated per sample (length `n·C`).
    pub fn forward(&self, x: &DenseMatrix) -> Result<DVector<f64>> {
        self.check_inputs(x)?;
        let c = self.output_dim();
        let mut out = DVector::zeros(x.nrows() * c);
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let f = self.forward_sample(&row);
            out.rows_mut(i * c, c).copy_from_slice(&f);
        }
        Ok(out)
    }

    /// Backpropagates the output cotangent `v` (length C) through a recorded
    /// forward pass. For every layer, from last to first, `visit` receives
    /// the layer index, the cotangent of that layer's pre-activation and the
    /// layer's input.
    pub fn backward_layers<F>(&self, trace: &ForwardTrace, v: &[f64], mut visit: F)
    where
        F: FnMut(usize, &[f64], &[f64]),
    {
        let theta = self.theta.as_slice();
        let layers = self.spec.layers();
        let mut delta = v.to_vec();
        for l in (0..layers.len()).rev() {
            let layer = layers[l];
            visit(l, &delta, &trace.inputs[l]);
            if l == 0 {
                break;
            }
            let prev_pre = &trace.pre_activations[l - 1];
            let mut next = vec![0.0; layer.fan_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &theta[layer.weight_index(o, 0)..layer.weight_index(o, 0) + layer.fan_in];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += w * d;
                }
            }
            for (n, z) in next.iter_mut().zip(prev_pre) {
                *n *= self.spec.activation.derivative(*z);
            }
            delta = next;
        }
    }

    /// Accumulates `J(x)ᵀ v` into `grad`.
    pub fn vjp_into(&self, trace: &ForwardTrace, v: &[f64], grad: &mut [f64]) {
        let layers = self.spec.layers();
        self.backward_layers(trace, v, |l, delta, input| {
            let layer = layers[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let base = layer.weight_index(o, 0);
                for (g, a) in grad[base..base + layer.fan_in].iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[layer.bias_index(o)] += d;
            }
        });
    }

    /// `C × p` Jacobian of one sample, returned as rows.
    pub fn sample_jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let trace = self.forward_trace(x);
        let c = self.output_dim();
        let p = self.param_count();
        (0..c)
            .map(|k| {
                let mut e = vec![0.0; c];
                e[k] = 1.0;
                let mut row = vec![0.0; p];
                self.vjp_into(&trace, &e, &mut row);
                row
            })
            .collect()
    }

    /// Stacked per-sample Jacobians `∇_θ f(x_i)`, rows `i·C .. (i+1)·C`.
    pub fn jacobian(&self, x: &DenseMatrix) -> Result<Jacobian> {
        self.check_inputs(x)?;
        let n = x.nrows();
        let c = self.output_dim();
        let p = self.param_count();
        let blocks: Vec<Vec<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.sample_jacobian(&row)
            })
            .collect();
        let mut matrix = DenseMatrix::zeros(n * c, p);
        for (i, block) in blocks.iter().enumerate() {
            for (k, row) in block.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    matrix[(i * c + k, j)] = *v;
                }
            }
        }
        Ok(Jacobian { matrix, n, c })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = NetworkFile {
            format: NETWORK_FORMAT.into(),
            version: 1,
            layer_widths: self.spec.layer_widths.clone(),
            activation: self.spec.activation,
            theta: self.theta.iter().copied().collect(),
        };
        crate::io::write_atomic(path, serde_json::to_string_pretty(&file)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: NetworkFile = serde_json::from_str(&text)?;
        if file.format != NETWORK_FORMAT {
            return Err(Error::Format(format!(
                "{}: expected format '{NETWORK_FORMAT}', found '{}'",
                path.display(),
                file.format
            )));
        }
        let spec = NetworkSpec {
            layer_widths: file.layer_widths,
            activation: file.activation,
        };
        Network::new(spec, DVector::from_vec(file.theta))
    }
}

/// Stacked parameter Jacobian of `n` samples with `C` outputs each.
#[derive(Debug, Clone)]
pub struct Jacobian {
    pub matrix: DenseMatrix,
    pub n: usize,
    pub c: usize,
}

impl Jacobian {
    pub fn from_matrix(matrix: DenseMatrix, c: usize) -> Result<Self> {
        if c == 0 || matrix.nrows() % c != 0 {
            return Err(Error::Dimension(format!(
                "{} Jacobian rows are not a multiple of C = {c}",
                matrix.nrows()
            )));
        }
        Ok(Self {
            n: matrix.nrows() / c,
            c,
            matrix,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn params(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Number of singular values of `J` above `tol · σ_max`, computed from the
/// eigenvalues of `J Jᵀ`.
pub fn jacobian_rank(jac: &Jacobian, tol: f64) -> usize {
    let gram = &jac.matrix * jac.matrix.transpose();
    let Ok(eig) = sym_eig(&gram) else {
        return 0;
    };
    let sv: Vec<f64> = eig.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * top).count()
}
