//! Scalar-decomposition sweep: one model per weight vector, each child
//! starting from a trained neighbour's parameters.

use fogforge_core::agent::{infer_placement, PolicyModel};
use fogforge_core::{ObjectivePoint, Placement, WeightVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::run::{solution_rows, SolutionRow};
use crate::train::{train, train_from, Datasets, EpisodeMetrics, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepNode {
    pub weights: WeightVector,
    /// Index of the node whose trained model seeds this one.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub nodes: Vec<SweepNode>,
}

impl SweepPlan {
    /// (0.5, 0.5) first, then (0.25, 0.75) and (0.75, 0.25) from it, then
    /// (0, 1) and (1, 0) from their nearest neighbours.
    pub fn standard() -> Self {
        let w = |t: f64| WeightVector { w_time: t, w_cost: 1.0 - t };
        Self {
            nodes: vec![
                SweepNode { weights: w(0.5), parent: None },
                SweepNode { weights: w(0.25), parent: Some(0) },
                SweepNode { weights: w(0.75), parent: Some(0) },
                SweepNode { weights: w(0.0), parent: Some(1) },
                SweepNode { weights: w(1.0), parent: Some(2) },
            ],
        }
    }

    /// The standard tree shape with every node on `weights`.
    pub fn uniform(weights: WeightVector) -> Self {
        let mut plan = Self::standard();
        for n in &mut plan.nodes {
            n.weights = weights;
        }
        plan
    }

    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                if p >= i {
                    return Err(Error::Usage(format!("sweep node {i} names parent {p}, which does not precede it")));
                }
            }
            WeightVector::new(n.weights.w_time, n.weights.w_cost)?;
        }
        Ok(())
    }

    /// Depth of every node; nodes of equal depth train concurrently.
    pub fn stages(&self) -> Vec<Vec<usize>> {
        let mut depth = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            depth[i] = n.parent.map_or(0, |p| depth[p] + 1);
        }
        let levels = depth.iter().max().map_or(0, |d| d + 1);
        (0..levels).map(|d| (0..self.nodes.len()).filter(|&i| depth[i] == d).collect()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Child episode budget as a fraction of the root's.
    pub child_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { child_fraction: 0.5 }
    }
}

impl SweepConfig {
    pub fn child_episodes(&self, root: usize) -> usize {
        ((root as f64 * self.child_fraction).round() as usize).max(usize::from(root > 0))
    }
}

#[derive(Debug, Clone)]
pub struct SweepMember {
    pub node: usize,
    pub weights: WeightVector,
    pub model: PolicyModel,
    pub episodes: usize,
    pub best_metric: f64,
    pub placement: Placement,
    pub point: ObjectivePoint,
    pub metrics: Vec<EpisodeMetrics>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub members: Vec<SweepMember>,
    /// Nodes that failed or whose ancestor failed, with the reason.
    pub failures: Vec<(usize, String)>,
}

impl SweepOutcome {
    pub fn total_episodes(&self) -> usize {
        self.members.iter().map(|m| m.episodes).sum()
    }

    /// One row per trained model, in plan order, with the dominated flag set
    /// among the sweep's own points.
    pub fn solutions(&self) -> Vec<SolutionRow> {
        let points: Vec<_> = self.members.iter().map(|m| (Some(m.weights), m.point)).collect();
        solution_rows(&points)
    }
}

/// Hooks for streaming sweep progress.
pub trait SweepObserver: Sync {
    fn member(&self, _member: &SweepMember) -> Result<()> {
        Ok(())
    }
}

impl SweepObserver for () {}

/// Trains the plan stage by stage. Solution points are the greedy
/// placements of each model on the first validation instance.
pub fn run_sweep(
    plan: &SweepPlan,
    config: &TrainConfig,
    sweep: &SweepConfig,
    data: &Datasets,
    observer: &impl SweepObserver,
) -> Result<SweepOutcome> {
    plan.validate()?;
    let target = data.validation.first().ok_or_else(|| Error::Usage("empty validation set".into()))?;
    let mut slots: Vec<Option<SweepMember>> = vec![None; plan.nodes.len()];
    let mut failures: Vec<(usize, String)> = Vec::new();
    for stage in plan.stages() {
        let results: Vec<(usize, Result<SweepMember>)> = stage
            .par_iter()
            .filter_map(|&i| {
                let node = plan.nodes[i];
                let node_config = TrainConfig {
                    weights: node.weights,
                    seed: config.seed.wrapping_add(i as u64),
                    episodes: if node.parent.is_some() { sweep.child_episodes(config.episodes) } else { config.episodes },
                    ..config.clone()
                };
                let outcome = match node.parent {
                    None => train(&node_config, data, &mut ()),
                    Some(p) => {
                        let parent = slots[p].as_ref()?;
                        train_from(parent.model.clone(), &node_config, data, &mut ())
                    }
                };
                let member = outcome.and_then(|out| {
                    let inference = infer_placement(&out.best, &target.app, &target.devices)?;
                    Ok(SweepMember {
                        node: i,
                        weights: node.weights,
                        model: out.best,
                        episodes: out.episodes_run,
                        best_metric: out.best_metric,
                        placement: inference.placement,
                        point: inference.point,
                        metrics: out.metrics,
                    })
                });
                Some((i, member))
            })
            .collect();
        for i in stage {
            if !results.iter().any(|(j, _)| *j == i) {
                failures.push((i, format!("parent {:?} did not finish", plan.nodes[i].parent)));
            }
        }
        for (i, r) in results {
            match r {
                Ok(m) => {
                    observer.member(&m)?;
                    slots[i] = Some(m);
                }
                Err(e) => failures.push((i, e.to_string())),
            }
        }
    }
    failures.sort_by_key(|f| f.0);
    Ok(SweepOutcome { members: slots.into_iter().flatten().collect(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            episodes: 2,
            envs_per_episode: 2,
            test_size: 2,
            validation_size: 2,
            eval_interval: 1,
            ..TrainConfig::desk()
        }
    }

    #[test]
    fn standard_plan_shape() {
        let plan = SweepPlan::standard();
        plan.validate().unwrap();
        assert_eq!(plan.stages(), vec![vec![0], vec![1, 2], vec![3, 4]]);
        let mut bad = plan.clone();
        bad.nodes[1].parent = Some(3);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_emits_five_points_with_less_training_than_from_scratch() {
        let config = tiny();
        let data = Datasets::generate(&config).unwrap();
        let out = run_sweep(&SweepPlan::standard(), &config, &SweepConfig::default(), &data, &()).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.members.len(), 5);
        assert_eq!(out.solutions().len(), 5);
        assert!(out.total_episodes() < 5 * config.episodes);
        for m in &out.members {
            m.placement.validate(&data.validation[0].app, &data.validation[0].devices).unwrap();
        }
    }

    #[test]
    fn transfer_without_training_copies_the_parent() {
        let config = TrainConfig { episodes: 0, ..tiny() };
        let data = Datasets::generate(&config).unwrap();
        let out = run_sweep(&SweepPlan::uniform(WeightVector::BALANCED), &config, &SweepConfig::default(), &data, &()).unwrap();
        let first = out.members[0].point;
        assert!(out.members.iter().all(|m| m.point == first && m.model.store == out.members[0].model.store));
    }
}
