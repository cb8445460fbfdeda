use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }
}

/// Whether batch normalization uses the statistics of the current batch or
/// the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Batch,
    Running,
}

/// Affine map `x W + b` with `W: in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), input_dim, output_dim, input_dim, rng);
        let bias = store.add_uniform(format!("{name}.bias"), 1, output_dim, input_dim, rng);
        Self { weight, bias, input_dim, output_dim }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let h = tape.matmul(x, w)?;
        tape.add_row(h, b)
    }
}

/// Batch normalization over rows with learnable scale/shift and running
/// statistics kept as buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Matrix::filled(1, width, 1.0)),
            beta: store.add(format!("{name}.beta"), Matrix::zeros(1, width)),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Matrix::zeros(1, width)),
            running_var: store.add_buffer(format!("{name}.running_var"), Matrix::filled(1, width, 1.0)),
            momentum: 0.1,
        }
    }

    /// Returns the output and, in batch mode, the batch (mean, variance).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mode: NormMode,
    ) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>)> {
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        match mode {
            NormMode::Batch => {
                let (y, mean, var) = tape.batch_norm(x, gamma, beta)?;
                Ok((y, Some((mean, var))))
            }
            NormMode::Running => {
                let mean = &store.get(self.running_mean).data;
                let var = &store.get(self.running_var).data;
                Ok((tape.batch_norm_fixed(x, gamma, beta, mean, var)?, None))
            }
        }
    }

    /// Exponential moving average update of the running statistics; the
    /// variance is stored unbiased.
    pub fn update_running(&self, store: &mut ParamStore, mean: &[f64], var: &[f64], batch: usize) {
        let unbias = if batch > 1 { batch as f64 / (batch - 1) as f64 } else { 1.0 };
        let m = self.momentum;
        for (r, &b) in store.get_mut(self.running_mean).data.iter_mut().zip(mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, &b) in store.get_mut(self.running_var).data.iter_mut().zip(var) {
            *r = (1.0 - m) * *r + m * b * unbias;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Batch normalization after every hidden affine layer.
    pub batch_norm: bool,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: usize, hidden_layers: usize, output_dim: usize, activation: Activation) -> Self {
        Self { input_dim, hidden_dims: vec![hidden; hidden_layers], output_dim, activation, batch_norm: false }
    }

    pub fn with_batch_norm(mut self, on: bool) -> Self {
        self.batch_norm = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("MLP dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// Hidden layers `affine -> [batch norm] -> activation`, then a linear
/// output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Linear>,
    pub norms: Vec<BatchNorm>,
    name: String,
}

/// Batch statistics produced by a forward pass, for running-stat updates.
pub type BatchStats = Vec<(BatchNorm, Vec<f64>, Vec<f64>, usize)>;

impl Mlp {
    pub fn new(spec: MlpSpec, store: &mut ParamStore, name: &str, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden_dims);
        dims.push(spec.output_dim);
        let mut layers = Vec::new();
        let mut norms = Vec::new();
        for (i, pair) in dims.windows(2).enumerate() {
            layers.push(Linear::new(store, &format!("{name}.{i}"), pair[0], pair[1], rng));
            if spec.batch_norm && i + 1 < dims.len() - 1 {
                norms.push(BatchNorm::new(store, &format!("{name}.bn{i}"), pair[1]));
            }
        }
        Ok(Self { spec, layers, norms, name: name.into() })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: NormMode) -> Result<Var> {
        self.forward_with_stats(tape, store, x, mode, None)
    }

    pub fn forward_with_stats(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mode: NormMode,
        mut stats: Option<&mut BatchStats>,
    ) -> Result<Var> {
        let width = tape.value(x).cols;
        if width != self.spec.input_dim {
            return Err(Error::Dimension(format!(
                "{}: input width {width}, expected {}",
                self.name, self.spec.input_dim
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i == last {
                break;
            }
            if let Some(norm) = self.norms.get(i) {
                let (y, batch) = norm.forward(tape, store, h, mode)?;
                if let (Some(sink), Some((mean, var))) = (stats.as_deref_mut(), batch) {
                    sink.push((norm.clone(), mean, var, tape.value(h).rows));
                }
                h = y;
            }
            h = self.spec.activation.apply(tape, h);
        }
        if cfg!(debug_assertions) && !tape.value(h).is_finite() {
            return Err(Error::Divergence(format!("{}: non-finite output", self.name)));
        }
        Ok(h)
    }
}
