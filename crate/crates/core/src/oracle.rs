//! Exhaustive enumeration of every placement, for ground truth on small
//! instances.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{
    evaluate_unchecked, weighted_objective, Application, DeviceSet, NormalizationBounds,
    ObjectivePoint, Placement, WeightVector,
};

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedOptimum {
    pub weights: WeightVector,
    pub value: f64,
    pub point: ObjectivePoint,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Exact Pareto front sorted by (time, cost), each point with the first
    /// placement (in enumeration order) that attains it.
    pub front: Vec<(ObjectivePoint, Placement)>,
    pub weighted: Vec<WeightedOptimum>,
    pub enumerated: u128,
}

impl OracleResult {
    pub fn front_points(&self) -> Vec<ObjectivePoint> {
        self.front.iter().map(|(p, _)| *p).collect()
    }
}

/// Number of total placements, `|devices|^services`.
pub fn placement_count(services: usize, devices: usize) -> Option<u128> {
    (devices as u128).checked_pow(u32::try_from(services).ok()?)
}

/// Enumerates all placements (odometer order, service 0 fastest) and returns
/// the exact front plus the weighted argmin for each of `weights`.
pub fn brute_force(
    app: &Application,
    devices: &DeviceSet,
    weights: &[WeightVector],
    norms: NormalizationBounds,
    cap: u128,
) -> Result<OracleResult> {
    let services = app.len();
    let k = devices.len();
    let count = placement_count(services, k).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::TooLarge { count, cap });
    }
    let mut hosts = vec![0usize; services];
    let mut front: Vec<(ObjectivePoint, Vec<usize>)> = Vec::new();
    let mut best: Vec<Option<(f64, ObjectivePoint, Vec<usize>)>> = vec![None; weights.len()];
    let mut enumerated: u128 = 0;
    loop {
        let point = evaluate_unchecked(app, &hosts, devices);
        enumerated += 1;
        insert_into_front(&mut front, point, &hosts);
        for (slot, &w) in best.iter_mut().zip(weights) {
            let value = weighted_objective(point, w, norms)?;
            if slot.as_ref().map_or(true, |(v, _, _)| value < *v) {
                *slot = Some((value, point, hosts.clone()));
            }
        }
        // advance odometer
        let mut pos = 0;
        loop {
            if pos == services {
                front.sort_by(|a, b| a.0.time.total_cmp(&b.0.time).then(a.0.cost.total_cmp(&b.0.cost)));
                let weighted = best
                    .into_iter()
                    .zip(weights)
                    .map(|(slot, &weights)| {
                        let (value, point, hosts) = slot.expect("at least one placement enumerated");
                        WeightedOptimum { weights, value, point, placement: Placement::new(hosts) }
                    })
                    .collect();
                return Ok(OracleResult {
                    front: front.into_iter().map(|(p, h)| (p, Placement::new(h))).collect(),
                    weighted,
                    enumerated,
                });
            }
            hosts[pos] += 1;
            if hosts[pos] < k {
                break;
            }
            hosts[pos] = 0;
            pos += 1;
        }
    }
}

/// Adds `point` to a non-dominated set unless an equal or dominating point
/// is already there.
pub(crate) fn insert_into_front(front: &mut Vec<(ObjectivePoint, Vec<usize>)>, point: ObjectivePoint, hosts: &[usize]) {
    if front.iter().any(|(p, _)| p.dominates(&point) || *p == point) {
        return;
    }
    front.retain(|(p, _)| !point.dominates(p));
    front.push((point, hosts.to_vec()));
}
