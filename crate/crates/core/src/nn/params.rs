use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// One named tensor. Buffers (`trainable == false`) are carried in
/// checkpoints but never receive gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub trainable: bool,
    pub value: Matrix,
}

/// Named, shape-stable parameter storage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: Vec<NamedTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.push(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.push(name.into(), value, false)
    }

    fn push(&mut self, name: String, value: Matrix, trainable: bool) -> ParamId {
        debug_assert!(self.tensors.iter().all(|t| t.name != name), "duplicate parameter {name}");
        self.tensors.push(NamedTensor { name, trainable, value });
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> ParamId {
        let bound = 1.0 / crate::math::sqrt(fan_in.max(1) as f64);
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.tensors[id.0].value
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.tensors[id.0].trainable
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total number of scalar parameters (buffers included).
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.data.len()).sum()
    }

    /// Same names, order and shapes.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| {
                a.name == b.name && a.trainable == b.trainable && a.value.shape() == b.value.shape()
            })
    }

    /// Copies every tensor of `other` into `self`; layouts must match.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::Architecture("parameter layouts differ".into()));
        }
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            grads: self.tensors.iter().map(|t| Matrix::zeros(t.value.rows, t.value.cols)).collect(),
        }
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub grads: Vec<Matrix>,
}

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn global_norm(&self) -> f64 {
        crate::math::sqrt(self.grads.iter().map(Matrix::norm_sq).sum())
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.scale_assign(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }
}

/// Rescales `grads` so that their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamGrads, max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Config("max_norm must be > 0".into()));
    }
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grads(v: Vec<f64>) -> ParamGrads {
        ParamGrads { grads: vec![Matrix::from_vec(1, v.len(), v)] }
    }

    #[test]
    fn clipping_examples() {
        let mut g = grads(vec![2.0, 0.0]);
        assert_eq!(clip_global_norm(&mut g, 1.0).unwrap(), 2.0);
        assert_eq!(g.grads[0].data, vec![1.0, 0.0]);
        let mut g = grads(vec![0.1]);
        clip_global_norm(&mut g, 1.0).unwrap();
        assert_eq!(g.grads[0].data, vec![0.1]);
        assert!(clip_global_norm(&mut g, 0.0).is_err());
    }

    #[test]
    fn clipped_norm_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut g = ParamGrads {
                grads: (0..3)
                    .map(|_| Matrix::from_vec(2, 2, (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect()))
                    .collect(),
            };
            let max = rng.gen_range(0.01..5.0);
            clip_global_norm(&mut g, max).unwrap();
            // independent recomputation of the norm
            let norm: f64 = g.grads.iter().flat_map(|m| m.data.iter()).map(|x| x * x).sum::<f64>();
            assert!(libm::sqrt(norm) <= max + 1e-12);
        }
    }
}
