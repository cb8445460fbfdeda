//! Seeded scenario generation.
//!
//! Draw order is fixed so a seed means the same scenario everywhere: the
//! generated devices first (latency, then cost, per device), then for each
//! application and each service in row-major order one Bernoulli draw for an
//! extra dependency followed, when it succeeds, by one uniform draw of the
//! predecessor.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Application, Device, DeviceSet, ServiceId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Generated devices, not counting the cloud.
    pub device_count: usize,
    pub rows_per_app: usize,
    pub latency_choices: Vec<f64>,
    pub cost_choices: Vec<f64>,
    pub extra_edge_prob: f64,
    pub cloud_latency: f64,
    pub cloud_cost: f64,
    pub op_count: f64,
    pub device_speed: f64,
    pub applications: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            device_count: 1000,
            rows_per_app: 9,
            latency_choices: vec![1.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            cost_choices: vec![1.0, 10.0, 20.0, 30.0, 40.0],
            extra_edge_prob: 0.2,
            cloud_latency: 50.0,
            cloud_cost: 20.0,
            op_count: 1.0,
            device_speed: 1.0,
            applications: 1,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Small instances used for desk-scale training and acceptance runs:
    /// 20 devices plus the cloud, 3x3 applications.
    pub fn desk() -> Self {
        Self { device_count: 20, rows_per_app: 3, ..Self::default() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows_per_app == 0 {
            return Err(Error::Config("rows_per_app must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.extra_edge_prob) {
            return Err(Error::Config(format!("extra_edge_prob {} outside [0, 1]", self.extra_edge_prob)));
        }
        if self.latency_choices.is_empty() || self.cost_choices.is_empty() {
            return Err(Error::Config("latency and cost choice lists must be non-empty".into()));
        }
        if self.latency_choices.iter().chain(&self.cost_choices).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("latency/cost choices must be finite and >= 0".into()));
        }
        if !(self.device_speed > 0.0) || !(self.op_count >= 0.0) {
            return Err(Error::Config("device_speed must be > 0 and op_count >= 0".into()));
        }
        if !(self.cloud_latency >= 0.0) || !(self.cloud_cost >= 0.0) {
            return Err(Error::Config("cloud latency and cost must be >= 0".into()));
        }
        Ok(())
    }
}

/// An infrastructure plus the applications to place on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub devices: DeviceSet,
    pub applications: Vec<Application>,
}

fn draw_devices(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<DeviceSet> {
    let mut devices = Vec::with_capacity(cfg.device_count + 1);
    devices.push(Device {
        id: 0,
        speed: cfg.device_speed,
        latency: cfg.cloud_latency,
        cost: cfg.cloud_cost,
        is_cloud: true,
    });
    for id in 1..=cfg.device_count {
        let latency = cfg.latency_choices[rng.gen_range(0..cfg.latency_choices.len())];
        let cost = cfg.cost_choices[rng.gen_range(0..cfg.cost_choices.len())];
        devices.push(Device { id, speed: cfg.device_speed, latency, cost, is_cloud: false });
    }
    DeviceSet::new(devices)
}

fn draw_application(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Application> {
    let n = cfg.rows_per_app;
    let mut extra = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if !rng.gen_bool(cfg.extra_edge_prob) {
                continue;
            }
            // every service earlier in row-major order, minus the chain
            // predecessor and anything already linked to (i, j)
            let target = ServiceId::new(i, j);
            let candidates: Vec<ServiceId> = (0..i * n + j)
                .map(|idx| ServiceId::new(idx / n, idx % n))
                .filter(|&src| !(src.row == i && src.col + 1 == j))
                .filter(|&src| !extra.contains(&(src, target)))
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let src = candidates[rng.gen_range(0..candidates.len())];
            extra.push((src, target));
        }
    }
    Application::new(vec![vec![cfg.op_count; n]; n], &extra)
}

/// `device_count` random devices plus the cloud (id 0).
pub fn generate_devices(cfg: &ScenarioConfig) -> Result<DeviceSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    draw_devices(cfg, &mut rng)
}

/// The first application of the scenario generated from `cfg`.
pub fn generate_application(cfg: &ScenarioConfig) -> Result<Application> {
    let mut scenario = generate_scenario(&ScenarioConfig { applications: 1, ..cfg.clone() })?;
    Ok(scenario.applications.remove(0))
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let devices = draw_devices(cfg, &mut rng)?;
    let applications = (0..cfg.applications)
        .map(|_| draw_application(cfg, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Scenario { config: cfg.clone(), devices, applications })
}
