//! Domain types and the two placement objectives.
//!
//! An application is a grid of services. Each grid row is a dependency chain
//! `S(i,0) -> S(i,1) -> ...`; extra edges may link a service to any service
//! earlier in row-major order. The response time of a placement is
//!
//! * the execution time `ops / speed` of every service on its host, plus
//! * the access latency of the host of every row-head service, plus
//! * for every dependency edge whose endpoints sit on different devices, the
//!   latency of the device hosting the edge's target.
//!
//! The cost of a placement is the summed cost of the host of every service.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fog node. One device per infrastructure is the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: usize,
    /// Operations per time unit.
    pub speed: f64,
    /// Communication latency in time units.
    pub latency: f64,
    pub cost: f64,
    pub is_cloud: bool,
}

/// A validated infrastructure: ids equal positions and exactly one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSet {
    devices: Vec<Device>,
    cloud: usize,
}

impl DeviceSet {
    pub fn new(devices: Vec<Device>) -> Result<Self> {
        let mut cloud = None;
        for (index, device) in devices.iter().enumerate() {
            if device.id != index {
                return Err(Error::InvalidDevices(format!(
                    "device at position {index} has id {}",
                    device.id
                )));
            }
            if !(device.speed > 0.0 && device.speed.is_finite()) {
                return Err(Error::InvalidDevices(format!("device {index}: speed must be > 0")));
            }
            if !(device.latency >= 0.0 && device.latency.is_finite()) {
                return Err(Error::InvalidDevices(format!("device {index}: latency must be >= 0")));
            }
            if !(device.cost >= 0.0 && device.cost.is_finite()) {
                return Err(Error::InvalidDevices(format!("device {index}: cost must be >= 0")));
            }
            if device.is_cloud {
                if cloud.is_some() {
                    return Err(Error::InvalidDevices("more than one cloud device".into()));
                }
                cloud = Some(index);
            }
        }
        let cloud = cloud.ok_or_else(|| Error::InvalidDevices("no cloud device".into()))?;
        Ok(Self { devices, cloud })
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Device> {
        self.devices.get(id)
    }

    pub fn as_slice(&self) -> &[Device] {
        &self.devices
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Device> {
        self.devices.iter()
    }

    pub fn cloud_id(&self) -> usize {
        self.cloud
    }

    pub fn cloud(&self) -> &Device {
        &self.devices[self.cloud]
    }

    pub fn max_latency(&self) -> f64 {
        self.devices.iter().map(|d| d.latency).fold(0.0, f64::max)
    }

    pub fn max_cost(&self) -> f64 {
        self.devices.iter().map(|d| d.cost).fold(0.0, f64::max)
    }

    pub fn max_speed(&self) -> f64 {
        self.devices.iter().map(|d| d.speed).fold(0.0, f64::max)
    }

    pub fn min_speed(&self) -> f64 {
        self.devices.iter().map(|d| d.speed).fold(f64::INFINITY, f64::min)
    }
}

/// Grid position of a service, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ServiceId {
    pub row: usize,
    pub col: usize,
}

impl ServiceId {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// A grid-shaped application with a dependency DAG.
///
/// Services are addressed either by [`ServiceId`] or by their row-major
/// index; edges are stored as `(source, target)` index pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Application {
    rows: usize,
    cols: usize,
    ops: Vec<f64>,
    edges: Vec<(usize, usize)>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl Application {
    /// Builds an application from its operation grid, adding the row chains
    /// and then `extra` edges in the given order.
    pub fn new(ops: Vec<Vec<f64>>, extra: &[(ServiceId, ServiceId)]) -> Result<Self> {
        let (rows, cols, flat) = flatten_grid(ops)?;
        let mut edges = chain_edges(rows, cols);
        for &(from, to) in extra {
            let edge = (index_in(rows, cols, from)?, index_in(rows, cols, to)?);
            if edges.contains(&edge) {
                return Err(Error::InvalidApplication(format!(
                    "duplicate edge {from:?} -> {to:?}"
                )));
            }
            edges.push(edge);
        }
        Self::assemble(rows, cols, flat, edges)
    }

    /// Builds an application from a full edge list, which must contain every
    /// row-chain edge.
    pub fn from_edges(ops: Vec<Vec<f64>>, edge_list: &[(ServiceId, ServiceId)]) -> Result<Self> {
        let (rows, cols, flat) = flatten_grid(ops)?;
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(from, to) in edge_list {
            let edge = (index_in(rows, cols, from)?, index_in(rows, cols, to)?);
            if edges.contains(&edge) {
                return Err(Error::InvalidApplication(format!(
                    "duplicate edge {from:?} -> {to:?}"
                )));
            }
            edges.push(edge);
        }
        for chain in chain_edges(rows, cols) {
            if !edges.contains(&chain) {
                return Err(Error::InvalidApplication(format!(
                    "missing row-chain edge {:?} -> {:?}",
                    id_in(cols, chain.0),
                    id_in(cols, chain.1)
                )));
            }
        }
        Self::assemble(rows, cols, flat, edges)
    }

    fn assemble(rows: usize, cols: usize, ops: Vec<f64>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = ops.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for &(from, to) in &edges {
            if from == to {
                return Err(Error::InvalidApplication("self-loop edge".into()));
            }
            preds[to].push(from);
            succs[from].push(to);
        }
        let app = Self { rows, cols, ops, edges, preds, succs };
        if app.topological_order().is_none() {
            return Err(Error::InvalidApplication("dependency graph has a cycle".into()));
        }
        Ok(app)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of services.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self, index: usize) -> f64 {
        self.ops[index]
    }

    pub fn ops_slice(&self) -> &[f64] {
        &self.ops
    }

    /// Operation counts as a row-major grid.
    pub fn ops_grid(&self) -> Vec<Vec<f64>> {
        self.ops.chunks(self.cols.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = (ServiceId, ServiceId)> + '_ {
        self.edges.iter().map(|&(a, b)| (self.id_of(a), self.id_of(b)))
    }

    pub fn predecessors(&self, index: usize) -> &[usize] {
        &self.preds[index]
    }

    pub fn successors(&self, index: usize) -> &[usize] {
        &self.succs[index]
    }

    pub fn id_of(&self, index: usize) -> ServiceId {
        id_in(self.cols, index)
    }

    pub fn index_of(&self, id: ServiceId) -> Result<usize> {
        index_in(self.rows, self.cols, id)
    }

    pub fn is_row_head(&self, index: usize) -> bool {
        index % self.cols.max(1) == 0
    }

    /// Kahn's algorithm; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &w in &self.succs[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.push(w);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

fn flatten_grid(ops: Vec<Vec<f64>>) -> Result<(usize, usize, Vec<f64>)> {
    let rows = ops.len();
    let cols = ops.first().map_or(0, Vec::len);
    if rows > 0 && cols == 0 {
        return Err(Error::InvalidApplication("rows must not be empty".into()));
    }
    let mut flat = Vec::with_capacity(rows * cols);
    for (i, row) in ops.into_iter().enumerate() {
        if row.len() != cols {
            return Err(Error::InvalidApplication(format!(
                "row {i} has {} services, expected {cols}",
                row.len()
            )));
        }
        for o in row {
            if !(o >= 0.0 && o.is_finite()) {
                return Err(Error::InvalidApplication(format!("row {i}: negative or non-finite ops")));
            }
            flat.push(o);
        }
    }
    Ok((rows, cols, flat))
}

fn chain_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(rows * cols.saturating_sub(1));
    for i in 0..rows {
        for j in 1..cols {
            edges.push((i * cols + j - 1, i * cols + j));
        }
    }
    edges
}

fn index_in(rows: usize, cols: usize, id: ServiceId) -> Result<usize> {
    if id.row >= rows || id.col >= cols {
        return Err(Error::InvalidApplication(format!("service {id:?} outside {rows}x{cols} grid")));
    }
    Ok(id.row * cols + id.col)
}

fn id_in(cols: usize, index: usize) -> ServiceId {
    let cols = cols.max(1);
    ServiceId::new(index / cols, index % cols)
}

/// Host device of every service, in row-major service order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub assignment: Vec<usize>,
}

impl Placement {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self { assignment }
    }

    /// Every service on `device`.
    pub fn uniform(services: usize, device: usize) -> Self {
        Self { assignment: vec![device; services] }
    }

    pub fn device_of(&self, service: usize) -> usize {
        self.assignment[service]
    }

    pub fn validate(&self, app: &Application, devices: &DeviceSet) -> Result<()> {
        if self.assignment.len() != app.len() {
            return Err(Error::InvalidPlacement(format!(
                "placement covers {} services, application has {}",
                self.assignment.len(),
                app.len()
            )));
        }
        if let Some((s, &k)) = self.assignment.iter().enumerate().find(|(_, &k)| k >= devices.len()) {
            return Err(Error::InvalidPlacement(format!("service {s} on unknown device {k}")));
        }
        Ok(())
    }
}

/// A point in (response time, cost) objective space. Both are minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub time: f64,
    pub cost: f64,
}

impl ObjectivePoint {
    pub const fn new(time: f64, cost: f64) -> Self {
        Self { time, cost }
    }

    /// `self` is no worse in both objectives and strictly better in one.
    pub fn dominates(&self, other: &Self) -> bool {
        self.time <= other.time
            && self.cost <= other.cost
            && (self.time < other.time || self.cost < other.cost)
    }
}

/// Scalarization weights; `w_time + w_cost = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w_time: f64,
    pub w_cost: f64,
}

impl WeightVector {
    pub const BALANCED: Self = Self { w_time: 0.5, w_cost: 0.5 };

    /// The five weight vectors of the scalar-decomposition sweep.
    pub const SWEEP: [Self; 5] = [
        Self { w_time: 0.0, w_cost: 1.0 },
        Self { w_time: 0.25, w_cost: 0.75 },
        Self { w_time: 0.5, w_cost: 0.5 },
        Self { w_time: 0.75, w_cost: 0.25 },
        Self { w_time: 1.0, w_cost: 0.0 },
    ];

    pub fn new(w_time: f64, w_cost: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w_time) || !(0.0..=1.0).contains(&w_cost) {
            return Err(Error::Config(format!("weights ({w_time}, {w_cost}) outside [0, 1]")));
        }
        if (w_time + w_cost - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("weights ({w_time}, {w_cost}) do not sum to 1")));
        }
        Ok(Self { w_time, w_cost })
    }

    pub fn from_time_weight(w_time: f64) -> Result<Self> {
        Self::new(w_time, 1.0 - w_time)
    }
}

/// Per-scenario upper bounds used to scale both objectives into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub max_time: f64,
    pub max_cost: f64,
}

impl NormalizationBounds {
    pub fn new(max_time: f64, max_cost: f64) -> Result<Self> {
        if !(max_time > 0.0 && max_time.is_finite()) || !(max_cost > 0.0 && max_cost.is_finite()) {
            return Err(Error::Config(format!(
                "normalization bounds must be positive, got ({max_time}, {max_cost})"
            )));
        }
        Ok(Self { max_time, max_cost })
    }

    /// `max_time = sum(ops) / min_speed + (rows + |edges|) * max_latency`,
    /// `max_cost = services * max_cost`. No placement can exceed either.
    pub fn analytic(app: &Application, devices: &DeviceSet) -> Result<Self> {
        let min_speed = devices.min_speed();
        let exec: f64 = app.ops_slice().iter().map(|o| o / min_speed).sum();
        let max_time = exec + (app.rows() + app.edges().len()) as f64 * devices.max_latency();
        let max_cost = app.len() as f64 * devices.max_cost();
        Self::new(max_time, max_cost)
    }
}

/// Latency charged to each service by its cross-device inbound edges,
/// row-major. Access latency of row heads is not included.
pub fn latency_contributions(
    app: &Application,
    placement: &Placement,
    devices: &DeviceSet,
) -> Result<Vec<f64>> {
    placement.validate(app, devices)?;
    Ok(edge_contributions(app, &placement.assignment, devices))
}

pub(crate) fn edge_contributions(app: &Application, hosts: &[usize], devices: &DeviceSet) -> Vec<f64> {
    let d = devices.as_slice();
    let mut out = vec![0.0; app.len()];
    for &(from, to) in app.edges() {
        if hosts[from] != hosts[to] {
            out[to] += d[hosts[to]].latency;
        }
    }
    out
}

/// Application response time.
pub fn response_time(app: &Application, placement: &Placement, devices: &DeviceSet) -> Result<f64> {
    placement.validate(app, devices)?;
    Ok(time_unchecked(app, &placement.assignment, devices))
}

/// Summed cost of the host of every service.
pub fn placement_cost(placement: &Placement, devices: &DeviceSet) -> Result<f64> {
    let d = devices.as_slice();
    placement.assignment.iter().try_fold(0.0, |acc, &k| {
        d.get(k)
            .map(|dev| acc + dev.cost)
            .ok_or_else(|| Error::InvalidPlacement(format!("unknown device {k}")))
    })
}

/// Both objectives at once.
pub fn evaluate(app: &Application, placement: &Placement, devices: &DeviceSet) -> Result<ObjectivePoint> {
    placement.validate(app, devices)?;
    Ok(evaluate_unchecked(app, &placement.assignment, devices))
}

/// Objectives of a host vector already known to be valid for `app`/`devices`.
pub(crate) fn evaluate_unchecked(app: &Application, hosts: &[usize], devices: &DeviceSet) -> ObjectivePoint {
    let d = devices.as_slice();
    ObjectivePoint {
        time: time_unchecked(app, hosts, devices),
        cost: hosts.iter().map(|&k| d[k].cost).sum(),
    }
}

fn time_unchecked(app: &Application, hosts: &[usize], devices: &DeviceSet) -> f64 {
    let d = devices.as_slice();
    let mut total = 0.0;
    for (s, &k) in hosts.iter().enumerate() {
        total += app.ops(s) / d[k].speed;
        if app.is_row_head(s) {
            total += d[k].latency;
        }
    }
    for &(from, to) in app.edges() {
        if hosts[from] != hosts[to] {
            total += d[hosts[to]].latency;
        }
    }
    total
}

/// `w_time * time / max_time + w_cost * cost / max_cost`; lower is better.
pub fn weighted_objective(
    point: ObjectivePoint,
    weights: WeightVector,
    norms: NormalizationBounds,
) -> Result<f64> {
    if !(norms.max_time > 0.0) || !(norms.max_cost > 0.0) {
        return Err(Error::Config("normalization bounds must be positive".into()));
    }
    Ok(weights.w_time * point.time / norms.max_time + weights.w_cost * point.cost / norms.max_cost)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn device(id: usize, latency: f64, cost: f64, is_cloud: bool) -> Device {
        Device { id, speed: 1.0, latency, cost, is_cloud }
    }

    /// The 3x3 worked example: four extra edges, rows on latency 2 / 6 / 10
    /// devices, and S(2,2) on a latency-3 device. Zero execution time.
    pub fn worked_example() -> (Application, DeviceSet, Placement) {
        let s = ServiceId::new;
        let app = Application::new(
            vec![vec![0.0; 3]; 3],
            &[
                (s(0, 0), s(1, 0)),
                (s(0, 1), s(1, 1)),
                (s(1, 0), s(2, 0)),
                (s(0, 2), s(2, 1)),
            ],
        )
        .unwrap();
        let devices = DeviceSet::new(vec![
            device(0, 50.0, 20.0, true),
            device(1, 2.0, 5.0, false),
            device(2, 6.0, 5.0, false),
            device(3, 10.0, 5.0, false),
            device(4, 3.0, 5.0, false),
        ])
        .unwrap();
        let placement = Placement::new(vec![1, 1, 1, 2, 2, 2, 3, 3, 4]);
        (app, devices, placement)
    }
}
