//! Control strategies: random hosts, everything in the cloud, and the two
//! single-device greedy heuristics.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, PlacementEnv, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::model::{Application, DeviceSet, NormalizationBounds, Placement, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    RandomDevices,
    AllInCloud,
    GreedyEdge,
    GreedyCost,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] =
        [StrategyKind::RandomDevices, StrategyKind::AllInCloud, StrategyKind::GreedyEdge, StrategyKind::GreedyCost];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::RandomDevices => "random-devices",
            StrategyKind::AllInCloud => "all-in-cloud",
            StrategyKind::GreedyEdge => "greedy-edge",
            StrategyKind::GreedyCost => "greedy-cost",
        }
    }
}

impl core::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(alloc::format!("unknown strategy {s}")))
    }
}

/// Device minimizing (latency, cost), ties to the lowest id.
pub fn lowest_latency_device(devices: &DeviceSet) -> usize {
    argmin_by(devices, |d| (d.latency, d.cost))
}

/// Device minimizing (cost, latency), ties to the lowest id.
pub fn lowest_cost_device(devices: &DeviceSet) -> usize {
    argmin_by(devices, |d| (d.cost, d.latency))
}

fn argmin_by(devices: &DeviceSet, key: impl Fn(&crate::model::Device) -> (f64, f64)) -> usize {
    let mut best = 0;
    for (k, d) in devices.iter().enumerate() {
        let (a, b) = key(d);
        let (ba, bb) = key(&devices.as_slice()[best]);
        if a < ba || (a == ba && b < bb) {
            best = k;
        }
    }
    best
}

pub fn run_baseline(kind: StrategyKind, app: &Application, devices: &DeviceSet, seed: u64) -> Placement {
    let n = app.len();
    match kind {
        StrategyKind::AllInCloud => Placement::uniform(n, devices.cloud_id()),
        StrategyKind::GreedyEdge => Placement::uniform(n, lowest_latency_device(devices)),
        StrategyKind::GreedyCost => Placement::uniform(n, lowest_cost_device(devices)),
        StrategyKind::RandomDevices => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Placement::new((0..n).map(|_| rng.gen_range(0..devices.len())).collect())
        }
    }
}

/// Replays `placement` through the environment in topological order,
/// starting with the reporting-only initial record.
pub fn placement_trajectory(
    app: &Application,
    devices: &DeviceSet,
    placement: &Placement,
    norms: NormalizationBounds,
    weights: WeightVector,
) -> Result<Vec<TrajectoryRecord>> {
    placement.validate(app, devices)?;
    let order = app
        .topological_order()
        .ok_or_else(|| Error::InvalidApplication("dependency cycle".into()))?;
    let mut env = PlacementEnv::with_norms(app, devices, norms);
    let mut records = alloc::vec![env.initial_record(weights)];
    for (step, service) in order.into_iter().enumerate() {
        let action = Action { service, device: placement.device_of(service) };
        let outcome = env.step(action, weights)?;
        records.push(env.record(step + 1, action, &outcome));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_scenario, ScenarioConfig};
    use crate::model::fixtures::device;
    use crate::model::{evaluate, weighted_objective};

    #[test]
    fn all_in_cloud_uses_the_cloud() {
        let sc = generate_scenario(&ScenarioConfig::desk().with_seed(1)).unwrap();
        let app = &sc.applications[0];
        let p = run_baseline(StrategyKind::AllInCloud, app, &sc.devices, 0);
        assert!(p.assignment.iter().all(|&k| k == sc.devices.cloud_id()));
    }

    #[test]
    fn greedy_tie_breaks() {
        let devices = DeviceSet::new(alloc::vec![
            device(0, 50.0, 20.0, true),
            device(1, 2.0, 9.0, false),
            device(2, 2.0, 3.0, false),
            device(3, 7.0, 1.0, false),
            device(4, 9.0, 1.0, false),
        ])
        .unwrap();
        assert_eq!(lowest_latency_device(&devices), 2);
        assert_eq!(lowest_cost_device(&devices), 3);
    }

    #[test]
    fn greedy_strategies_agree_with_a_dominant_device() {
        let devices = DeviceSet::new(alloc::vec![
            device(0, 50.0, 20.0, true),
            device(1, 5.0, 4.0, false),
            device(2, 1.0, 1.0, false),
            device(3, 3.0, 2.0, false),
        ])
        .unwrap();
        let app = Application::new(alloc::vec![alloc::vec![0.0; 3]; 3], &[]).unwrap();
        let e = evaluate(&app, &run_baseline(StrategyKind::GreedyEdge, &app, &devices, 0), &devices).unwrap();
        let c = evaluate(&app, &run_baseline(StrategyKind::GreedyCost, &app, &devices, 0), &devices).unwrap();
        assert_eq!(e, c);
    }

    #[test]
    fn random_is_seeded() {
        let sc = generate_scenario(&ScenarioConfig::desk().with_seed(2)).unwrap();
        let app = &sc.applications[0];
        let a = run_baseline(StrategyKind::RandomDevices, app, &sc.devices, 9);
        assert_eq!(a, run_baseline(StrategyKind::RandomDevices, app, &sc.devices, 9));
        assert_ne!(a, run_baseline(StrategyKind::RandomDevices, app, &sc.devices, 10));
        a.validate(app, &sc.devices).unwrap();
    }

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("best".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn replay_ends_at_the_placement_objective() {
        let sc = generate_scenario(&ScenarioConfig::desk().with_seed(3)).unwrap();
        let app = &sc.applications[0];
        let norms = NormalizationBounds::analytic(app, &sc.devices).unwrap();
        let p = run_baseline(StrategyKind::RandomDevices, app, &sc.devices, 4);
        let recs = placement_trajectory(app, &sc.devices, &p, norms, WeightVector::BALANCED).unwrap();
        let point = evaluate(app, &p, &sc.devices).unwrap();
        let last = recs.last().unwrap();
        assert_eq!((last.t_app, last.cost), (point.time, point.cost));
        let total: f64 = recs.iter().map(|r| r.r_total).sum();
        let w = weighted_objective(point, WeightVector::BALANCED, norms).unwrap();
        assert!((-total - w).abs() < 1e-12);
    }
}
