//! Minimal reverse-mode autodiff: dense matrices, a recording tape, MLPs
//! with optional batch normalization, Adam and a step-decay schedule.

mod layers;
mod matrix;
mod optim;
mod params;
mod tape;

pub use layers::{Activation, BatchNorm, BatchStats, Linear, Mlp, MlpSpec, NormMode};
pub use matrix::Matrix;
pub use optim::{Adam, AdamConfig, OptimizerState, StepLr};
pub use params::{clip_global_norm, NamedTensor, ParamGrads, ParamId, ParamStore};
pub use tape::{Gradients, Neighbors, Tape, Var, BN_EPS};
