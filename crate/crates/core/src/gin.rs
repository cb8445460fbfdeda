//! Graph Isomorphism Network over the service DAG.
//!
//! `h0 = MLP0(x)`, then for `k = 1..=K`
//! `hk = MLPk((1 + eps_k) * h(k-1) + sum over neighbours u of h(k-1)_u)`,
//! each MLP output followed by batch normalization and the activation. The
//! graph embedding is the mean of the final node embeddings. Neighbourhoods
//! are undirected: predecessors and successors both count.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvState, GRAPH_FEATURES, TASK_FEATURES};
use crate::error::{Error, Result};
use crate::model::Application;
use crate::nn::{Activation, BatchNorm, Matrix, Mlp, MlpSpec, Neighbors, NormMode, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GinConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub k_iterations: usize,
    /// Affine layers per MLP.
    pub mlp_layers: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl Default for GinConfig {
    fn default() -> Self {
        Self {
            input_dim: TASK_FEATURES + GRAPH_FEATURES,
            hidden_dim: 32,
            k_iterations: 2,
            mlp_layers: 4,
            activation: Activation::Tanh,
            batch_norm: true,
        }
    }
}

impl GinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_iterations == 0 || self.hidden_dim == 0 || self.mlp_layers == 0 || self.input_dim == 0 {
            return Err(Error::Config(format!("invalid GIN configuration {self:?}")));
        }
        Ok(())
    }
}

/// Static graph structure of one application.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub neighbors: Neighbors,
    /// In- and out-degree scaled by the largest degree in the graph.
    pub degree_features: Vec<[f64; GRAPH_FEATURES]>,
}

impl GraphInput {
    pub fn from_application(app: &Application) -> Self {
        let n = app.len();
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                let mut list: Vec<usize> = app.predecessors(v).iter().chain(app.successors(v)).copied().collect();
                list.sort_unstable();
                list.dedup();
                list
            })
            .collect();
        let max_degree = (0..n)
            .map(|v| app.predecessors(v).len().max(app.successors(v).len()))
            .max()
            .unwrap_or(0)
            .max(1) as f64;
        let degree_features = (0..n)
            .map(|v| [app.predecessors(v).len() as f64 / max_degree, app.successors(v).len() as f64 / max_degree])
            .collect();
        Self { neighbors: Arc::new(neighbors), degree_features }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Node input matrix: the state's service features followed by the
    /// degree features.
    pub fn node_features(&self, state: &EnvState) -> Result<Matrix> {
        if state.services() != self.len() {
            return Err(Error::Dimension(format!(
                "state has {} services, graph has {}",
                state.services(),
                self.len()
            )));
        }
        let cols = TASK_FEATURES + GRAPH_FEATURES;
        let mut m = Matrix::zeros(self.len(), cols);
        for (v, (task, degree)) in state.service_features.iter().zip(&self.degree_features).enumerate() {
            m.row_mut(v)[..TASK_FEATURES].copy_from_slice(task);
            m.row_mut(v)[TASK_FEATURES..].copy_from_slice(degree);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GraphEmbedding {
    /// `nodes x hidden_dim`.
    pub nodes: Var,
    /// `1 x hidden_dim` mean of `nodes`.
    pub pooled: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gin {
    pub config: GinConfig,
    pub input_mlp: Mlp,
    pub iteration_mlps: Vec<Mlp>,
    pub eps: Vec<ParamId>,
    pub post_norms: Vec<BatchNorm>,
}

impl Gin {
    pub fn new(config: GinConfig, store: &mut ParamStore, name: &str, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let spec = |input| {
            MlpSpec::new(input, config.hidden_dim, config.mlp_layers - 1, config.hidden_dim, config.activation)
                .with_batch_norm(config.batch_norm)
        };
        let input_mlp = Mlp::new(spec(config.input_dim), store, &format!("{name}.mlp0"), rng)?;
        let mut iteration_mlps = Vec::new();
        let mut eps = Vec::new();
        let mut post_norms = Vec::new();
        if config.batch_norm {
            post_norms.push(BatchNorm::new(store, &format!("{name}.norm0"), config.hidden_dim));
        }
        for k in 1..=config.k_iterations {
            iteration_mlps.push(Mlp::new(spec(config.hidden_dim), store, &format!("{name}.mlp{k}"), rng)?);
            eps.push(store.add(format!("{name}.eps{k}"), Matrix::scalar(0.0)));
            if config.batch_norm {
                post_norms.push(BatchNorm::new(store, &format!("{name}.norm{k}"), config.hidden_dim));
            }
        }
        Ok(Self { config, input_mlp, iteration_mlps, eps, post_norms })
    }

    fn finish(&self, tape: &mut Tape, store: &ParamStore, h: Var, k: usize, mode: NormMode) -> Result<Var> {
        let h = match self.post_norms.get(k) {
            Some(norm) => norm.forward(tape, store, h, mode)?.0,
            None => h,
        };
        Ok(self.config.activation.apply(tape, h))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        features: Var,
        neighbors: &Neighbors,
        mode: NormMode,
    ) -> Result<GraphEmbedding> {
        let h0 = self.input_mlp.forward(tape, store, features, mode)?;
        let mut h = self.finish(tape, store, h0, 0, mode)?;
        for (k, (mlp, &eps)) in self.iteration_mlps.iter().zip(&self.eps).enumerate() {
            let eps = tape.param(store, eps);
            let scaled = tape.mul_scalar(h, eps)?;
            let with_self = tape.add(h, scaled)?;
            let aggregated = tape.neighbor_sum(h, neighbors)?;
            let combined = tape.add(with_self, aggregated)?;
            let out = mlp.forward(tape, store, combined, mode)?;
            h = self.finish(tape, store, out, k + 1, mode)?;
        }
        let pooled = tape.mean_rows(h)?;
        Ok(GraphEmbedding { nodes: h, pooled })
    }
}
