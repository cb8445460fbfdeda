use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::{ParamGrads, ParamStore};
use super::Matrix;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplicative learning-rate decay per scheduler period.
    pub decay_gamma: f64,
    /// Scheduler steps (training episodes) per decay.
    pub decay_every: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.022, beta1: 0.9, beta2: 0.999, eps: 1e-8, decay_gamma: 0.9, decay_every: 1 }
    }
}

/// Step-decay learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLr {
    pub gamma: f64,
    pub step_size: usize,
    pub epochs: usize,
}

impl StepLr {
    /// Advances one period; returns the new learning rate.
    pub fn step(&mut self, adam: &mut Adam) -> f64 {
        self.epochs += 1;
        if self.step_size > 0 && self.epochs % self.step_size == 0 {
            adam.learning_rate *= self.gamma;
        }
        adam.learning_rate
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

/// Optimizer plus schedule, reset on parameter transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub adam: Adam,
    pub scheduler: StepLr,
}

impl OptimizerState {
    pub fn new(config: &AdamConfig, store: &ParamStore) -> Result<Self> {
        Ok(Self {
            adam: Adam::new(config, store)?,
            scheduler: StepLr { gamma: config.decay_gamma, step_size: config.decay_every, epochs: 0 },
        })
    }

    pub fn end_of_episode(&mut self) -> f64 {
        self.scheduler.step(&mut self.adam)
    }
}

impl Adam {
    pub fn new(config: &AdamConfig, store: &ParamStore) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        let first: Vec<Matrix> =
            store.tensors().iter().map(|t| Matrix::zeros(t.value.rows, t.value.cols)).collect();
        Ok(Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            step: 0,
            second: first.clone(),
            first,
        })
    }

    /// One update of every trainable tensor of `store`.
    pub fn apply(&mut self, store: &mut ParamStore, grads: &ParamGrads) -> Result<()> {
        if grads.grads.len() != store.len() || self.first.len() != store.len() {
            return Err(Error::Dimension("optimizer/parameter layout mismatch".into()));
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let g = &grads.grads[id.0];
            let m = &mut self.first[id.0];
            let v = &mut self.second[id.0];
            let p = store.get_mut(id);
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = m.data[k] / c1;
                let vhat = v.data[k] / c2;
                p.data[k] -= self.learning_rate * mhat / (math::sqrt(vhat) + self.eps);
            }
        }
        Ok(())
    }

    pub fn first_moment(&self, index: usize) -> &Matrix {
        &self.first[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn store(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Matrix::scalar(value));
        s
    }

    fn grad(value: f64) -> ParamGrads {
        ParamGrads { grads: vec![Matrix::scalar(value)] }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = store(1.0);
        let mut adam = Adam::new(&AdamConfig::default(), &s).unwrap();
        adam.apply(&mut s, &grad(1.0)).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        let moved = 1.0 - s.get(super::super::ParamId(0)).data[0];
        assert!((moved - 0.022 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store(1.0);
        let mut adam = Adam::new(&AdamConfig::default(), &s).unwrap();
        adam.apply(&mut s, &grad(1.0)).unwrap();
        let before = s.clone();
        let m_before = adam.first_moment(0).data[0];
        adam.apply(&mut s, &grad(0.0)).unwrap();
        assert!((adam.first_moment(0).data[0] - 0.9 * m_before).abs() < 1e-15);
        // the decayed first moment still moves the parameter; a fresh
        // optimizer with zero gradient must not
        let mut fresh = Adam::new(&AdamConfig::default(), &before).unwrap();
        let mut s2 = before.clone();
        fresh.apply(&mut s2, &grad(0.0)).unwrap();
        assert_eq!(s2, before);
    }

    #[test]
    fn scheduler_decays_each_period() {
        let s = store(0.0);
        let mut opt = OptimizerState::new(&AdamConfig::default(), &s).unwrap();
        assert_eq!(opt.end_of_episode(), 0.022 * 0.9);
        let mut slow = OptimizerState::new(&AdamConfig { decay_every: 2, ..AdamConfig::default() }, &s).unwrap();
        assert_eq!(slow.end_of_episode(), 0.022);
        assert_eq!(slow.end_of_episode(), 0.022 * 0.9);
        assert!(Adam::new(&AdamConfig { learning_rate: 0.0, ..AdamConfig::default() }, &s).is_err());
    }
}
