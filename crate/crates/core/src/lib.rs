//! Core of `fogforge`: a multi-objective fog service placement workbench.
//!
//! Everything in this crate is `no_std` + `alloc`. It holds the placement
//! model and its two objectives (application response time and placement
//! cost), the reinforcement-learning environment, a small reverse-mode
//! autodiff engine, the GIN encoder and the two PPO actor-critics, the
//! baseline heuristics, the evolutionary solvers, and the brute-force oracle.
//!
//! IO, threading, training orchestration and the CLI live in the `fogforge`
//! crate.

#![no_std]

extern crate alloc;

pub mod agent;
pub mod baselines;
pub mod env;
pub mod error;
pub mod evo;
pub mod gin;
pub mod instance;
pub(crate) mod math;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod pareto;

pub use error::{Error, Result};
pub use model::{
    Application, Device, DeviceSet, NormalizationBounds, ObjectivePoint, Placement, ServiceId,
    WeightVector,
};
