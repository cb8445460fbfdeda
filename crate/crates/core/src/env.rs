//! Placement environment.
//!
//! Every episode starts with all services on the cloud. Each action re-places
//! one service whose predecessors have all been re-placed, so a trajectory
//! has exactly one step per service. The reward of an action is the drop in
//! each objective between the two states, and the weighted reward combines
//! the drops scaled by the scenario's normalization bounds. Summed over a
//! trajectory the time reward telescopes to `T(initial) - T(final)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    edge_contributions, evaluate_unchecked, Application, DeviceSet, NormalizationBounds,
    ObjectivePoint, Placement, ServiceId, WeightVector,
};

/// Per-service features: execution time on the current host, inbound
/// latency charged to the service (access latency for row heads plus
/// cross-device edge latency), and the placed flag.
pub const TASK_FEATURES: usize = 3;
/// Per-device features: latency, speed, cost.
pub const DEVICE_FEATURES: usize = 3;
/// Static per-service graph features: in-degree and out-degree.
pub const GRAPH_FEATURES: usize = 2;

/// Observation. Every feature is scaled into `[0, 1]` by scenario-wide
/// maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub service_features: Vec<[f64; TASK_FEATURES]>,
    pub device_features: Vec<[f64; DEVICE_FEATURES]>,
    /// Normalized latency of each service's current host.
    pub allocation: Vec<f64>,
    pub placed: Vec<bool>,
    pub eligible: Vec<bool>,
}

impl EnvState {
    pub fn services(&self) -> usize {
        self.service_features.len()
    }

    pub fn devices(&self) -> usize {
        self.device_features.len()
    }

    pub fn eligible_indices(&self) -> Vec<usize> {
        (0..self.eligible.len()).filter(|&i| self.eligible[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub service: usize,
    pub device: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_time: f64,
    pub r_cost: f64,
    pub r_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub point: ObjectivePoint,
    pub done: bool,
}

/// One line of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub service: Option<ServiceId>,
    pub device: Option<usize>,
    pub r_time: f64,
    pub r_cost: f64,
    pub r_total: f64,
    pub t_app: f64,
    pub cost: f64,
}

pub struct PlacementEnv<'a> {
    app: &'a Application,
    devices: &'a DeviceSet,
    norms: NormalizationBounds,
    hosts: Vec<usize>,
    placed: Vec<bool>,
    unplaced_preds: Vec<usize>,
    placed_count: usize,
    point: ObjectivePoint,
    device_features: Vec<[f64; DEVICE_FEATURES]>,
    exec_scale: f64,
    inbound_scale: f64,
    latency_scale: f64,
}

impl<'a> PlacementEnv<'a> {
    /// Environment with analytic normalization bounds, already reset.
    pub fn new(app: &'a Application, devices: &'a DeviceSet) -> Result<Self> {
        let norms = NormalizationBounds::analytic(app, devices)?;
        Ok(Self::with_norms(app, devices, norms))
    }

    pub fn with_norms(app: &'a Application, devices: &'a DeviceSet, norms: NormalizationBounds) -> Self {
        let max_latency = devices.max_latency();
        let max_speed = devices.max_speed();
        let max_cost = devices.max_cost();
        let device_features = devices
            .iter()
            .map(|d| [ratio(d.latency, max_latency), ratio(d.speed, max_speed), ratio(d.cost, max_cost)])
            .collect();
        let max_ops = app.ops_slice().iter().copied().fold(0.0, f64::max);
        let max_indegree = (0..app.len()).map(|v| app.predecessors(v).len()).max().unwrap_or(0);
        let mut env = Self {
            app,
            devices,
            norms,
            hosts: Vec::new(),
            placed: Vec::new(),
            unplaced_preds: Vec::new(),
            placed_count: 0,
            point: ObjectivePoint::new(0.0, 0.0),
            device_features,
            exec_scale: max_ops / devices.min_speed(),
            inbound_scale: max_latency * (max_indegree + 1) as f64,
            latency_scale: max_latency,
        };
        env.reset();
        env
    }

    /// All services back on the cloud, nothing placed.
    pub fn reset(&mut self) -> EnvState {
        let n = self.app.len();
        self.hosts = vec![self.devices.cloud_id(); n];
        self.placed = vec![false; n];
        self.unplaced_preds = (0..n).map(|v| self.app.predecessors(v).len()).collect();
        self.placed_count = 0;
        self.point = evaluate_unchecked(self.app, &self.hosts, self.devices);
        self.state()
    }

    pub fn application(&self) -> &'a Application {
        self.app
    }

    pub fn devices(&self) -> &'a DeviceSet {
        self.devices
    }

    pub fn norms(&self) -> NormalizationBounds {
        self.norms
    }

    pub fn objective(&self) -> ObjectivePoint {
        self.point
    }

    pub fn placement(&self) -> Placement {
        Placement::new(self.hosts.clone())
    }

    pub fn is_done(&self) -> bool {
        self.placed_count == self.app.len()
    }

    /// Services not yet re-placed whose predecessors all have been.
    pub fn eligible_services(&self) -> Vec<bool> {
        (0..self.app.len()).map(|v| !self.placed[v] && self.unplaced_preds[v] == 0).collect()
    }

    pub fn state(&self) -> EnvState {
        let d = self.devices.as_slice();
        let contributions = edge_contributions(self.app, &self.hosts, self.devices);
        let service_features = (0..self.app.len())
            .map(|v| {
                let host = &d[self.hosts[v]];
                let mut inbound = contributions[v];
                if self.app.is_row_head(v) {
                    inbound += host.latency;
                }
                [
                    ratio(self.app.ops(v) / host.speed, self.exec_scale),
                    ratio(inbound, self.inbound_scale),
                    if self.placed[v] { 1.0 } else { 0.0 },
                ]
            })
            .collect();
        let allocation = self.hosts.iter().map(|&k| ratio(d[k].latency, self.latency_scale)).collect();
        EnvState {
            service_features,
            device_features: self.device_features.clone(),
            allocation,
            placed: self.placed.clone(),
            eligible: self.eligible_services(),
        }
    }

    /// Applies `action` and returns the per-objective improvement.
    pub fn step(&mut self, action: Action, weights: WeightVector) -> Result<StepOutcome> {
        let Action { service, device } = action;
        if service >= self.app.len() || self.placed[service] || self.unplaced_preds[service] != 0 {
            return Err(Error::IllegalAction(format!("service {service} is not eligible")));
        }
        if device >= self.devices.len() {
            return Err(Error::IllegalAction(format!("unknown device {device}")));
        }
        self.hosts[service] = device;
        self.placed[service] = true;
        self.placed_count += 1;
        for &succ in self.app.successors(service) {
            self.unplaced_preds[succ] -= 1;
        }
        let before = self.point;
        self.point = evaluate_unchecked(self.app, &self.hosts, self.devices);
        let reward = self.reward_between(before, self.point, weights);
        Ok(StepOutcome { reward, point: self.point, done: self.is_done() })
    }

    fn reward_between(&self, before: ObjectivePoint, after: ObjectivePoint, w: WeightVector) -> RewardBreakdown {
        let r_time = before.time - after.time;
        let r_cost = before.cost - after.cost;
        RewardBreakdown {
            r_time,
            r_cost,
            r_total: w.w_time * r_time / self.norms.max_time + w.w_cost * r_cost / self.norms.max_cost,
        }
    }

    /// Reporting-only record for the initial cloud placement: its reward is
    /// the negated objective, so that minus the running reward sum equals
    /// the current objective.
    pub fn initial_record(&self, weights: WeightVector) -> TrajectoryRecord {
        let reward = self.reward_between(ObjectivePoint::new(0.0, 0.0), self.point, weights);
        TrajectoryRecord {
            step: 0,
            service: None,
            device: None,
            r_time: reward.r_time,
            r_cost: reward.r_cost,
            r_total: reward.r_total,
            t_app: self.point.time,
            cost: self.point.cost,
        }
    }

    pub fn record(&self, step: usize, action: Action, outcome: &StepOutcome) -> TrajectoryRecord {
        TrajectoryRecord {
            step,
            service: Some(self.app.id_of(action.service)),
            device: Some(action.device),
            r_time: outcome.reward.r_time,
            r_cost: outcome.reward.r_cost,
            r_total: outcome.reward.r_total,
            t_app: outcome.point.time,
            cost: outcome.point.cost,
        }
    }
}

fn ratio(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        (value / scale).clamp(0.0, 1.0)
    } else {
        0.0
    }
}
