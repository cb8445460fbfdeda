//! Versioned JSON checkpoints: the policy configuration plus every named
//! tensor with its shape.

use std::path::Path;

use fogforge_core::agent::{PolicyConfig, PolicyModel};
use fogforge_core::nn::ParamStore;
use fogforge_core::WeightVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::{read_json, write_json};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub weights: WeightVector,
    /// Episodes trained when the snapshot was taken.
    pub episode: usize,
    /// Test-set mean weighted objective at that point, when evaluated.
    pub metric: Option<f64>,
    pub policy: PolicyConfig,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(model: &PolicyModel, weights: WeightVector, episode: usize, metric: Option<f64>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            weights,
            episode,
            metric,
            policy: model.config.clone(),
            params: model.store.clone(),
        }
    }

    pub fn to_model(&self) -> fogforge_core::Result<PolicyModel> {
        PolicyModel::from_store(self.policy.clone(), &self.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Loads and checks version, tensor shapes and layout.
    pub fn load(path: &Path) -> Result<(Self, PolicyModel)> {
        let ckpt: Checkpoint = read_json(path)?;
        let schema = |message: String| Error::Schema { path: path.into(), message };
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(schema(format!("checkpoint version {} (expected {CHECKPOINT_VERSION})", ckpt.version)));
        }
        if let Some(t) = ckpt.params.tensors().iter().find(|t| t.value.data.len() != t.value.rows * t.value.cols) {
            return Err(schema(format!("tensor {} has {} values for shape {:?}", t.name, t.value.data.len(), t.value.shape())));
        }
        let model = ckpt.to_model().map_err(|e| schema(e.to_string()))?;
        Ok((ckpt, model))
    }
}
