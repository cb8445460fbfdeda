//! Episode loop with synchronous PPO, held-out datasets and best-checkpoint
//! selection.
//!
//! Each episode collects one sampled rollout per environment
//! in parallel, then applies a single joint PPO update. Every rollout draws
//! from its own random stream derived from (seed, episode, environment), so
//! results do not depend on the number of worker threads.

use fogforge_core::agent::{
    infer_placement, ppo_update, rollout, PolicyConfig, PolicyModel, PpoConfig, SelectionMode, Trajectory,
};
use fogforge_core::baselines::{run_baseline, StrategyKind};
use fogforge_core::instance::{generate_scenario, ScenarioConfig};
use fogforge_core::model::{evaluate, weighted_objective};
use fogforge_core::nn::{AdamConfig, OptimizerState};
use fogforge_core::{Application, DeviceSet, NormalizationBounds, ObjectivePoint, WeightVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub scenario: ScenarioConfig,
    pub episodes: usize,
    pub envs_per_episode: usize,
    pub weights: WeightVector,
    pub seed: u64,
    /// Episodes between test-set evaluations.
    pub eval_interval: usize,
    /// Distinct training scenarios cycled through; 0 draws a fresh scenario
    /// for every rollout.
    pub train_size: usize,
    pub test_size: usize,
    pub validation_size: usize,
    pub adam: AdamConfig,
    pub ppo: PpoConfig,
    /// Network shape; the service count is taken from `scenario`.
    pub policy: PolicyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            episodes: 150,
            envs_per_episode: 40,
            weights: WeightVector::BALANCED,
            seed: 0,
            eval_interval: 5,
            train_size: 0,
            test_size: 10,
            validation_size: 10,
            adam: AdamConfig::default(),
            ppo: PpoConfig::default(),
            policy: PolicyConfig::default(),
        }
    }
}

impl TrainConfig {
    /// 20 devices plus the cloud, 3x3 applications, 60 episodes of 8
    /// environments.
    pub fn desk() -> Self {
        Self { scenario: ScenarioConfig::desk(), episodes: 60, envs_per_episode: 8, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.envs_per_episode == 0 {
            return Err(Error::Usage("envs_per_episode must be >= 1".into()));
        }
        if self.eval_interval == 0 || self.test_size == 0 || self.validation_size == 0 {
            return Err(Error::Usage("eval_interval, test_size and validation_size must be >= 1".into()));
        }
        WeightVector::new(self.weights.w_time, self.weights.w_cost)?;
        self.policy_config().validate()?;
        Ok(())
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig { services: self.scenario.rows_per_app * self.scenario.rows_per_app, ..self.policy.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train = 0,
    Test = 1,
    Validation = 2,
    Init = 3,
}

/// Scenario seed of item `index` of `split`. Splits occupy disjoint seed
/// ranges for a given master seed.
pub fn split_seed(master: u64, split: Split, index: u64) -> u64 {
    assert!(index < 1 << 40, "dataset index out of range");
    mix(master) ^ ((split as u64) << 40 | index)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream of one rollout.
pub fn rollout_rng(master: u64, episode: usize, env: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(master ^ 0x5EED) ^ (episode as u64) << 20 ^ env as u64))
}

/// One application on one infrastructure, with its normalization bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub seed: u64,
    pub devices: DeviceSet,
    pub app: Application,
    pub norms: NormalizationBounds,
}

impl Instance {
    pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        let cfg = ScenarioConfig { applications: 1, ..config.with_seed(seed) };
        let mut sc = generate_scenario(&cfg)?;
        let app = sc.applications.remove(0);
        let norms = NormalizationBounds::analytic(&app, &sc.devices)?;
        Ok(Self { seed, devices: sc.devices, app, norms })
    }

    pub fn weighted(&self, point: ObjectivePoint, weights: WeightVector) -> f64 {
        weighted_objective(point, weights, self.norms).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub test: Vec<Instance>,
    pub validation: Vec<Instance>,
}

impl Datasets {
    pub fn generate(config: &TrainConfig) -> Result<Self> {
        let make = |split, n: usize| -> Result<Vec<Instance>> {
            (0..n as u64).map(|i| Instance::generate(&config.scenario, split_seed(config.seed, split, i))).collect()
        };
        Ok(Self {
            test: make(Split::Test, config.test_size)?,
            validation: make(Split::Validation, config.validation_size)?,
        })
    }
}

pub fn train_instance(config: &TrainConfig, episode: usize, env: usize) -> Result<Instance> {
    let mut index = (episode * config.envs_per_episode + env) as u64;
    if config.train_size > 0 {
        index %= config.train_size as u64;
    }
    Instance::generate(&config.scenario, split_seed(config.seed, Split::Train, index))
}

/// Mean weighted objective of greedy placements over `instances`.
pub fn evaluate_policy(model: &PolicyModel, instances: &[Instance], weights: WeightVector) -> Result<f64> {
    let values: Vec<f64> = instances
        .par_iter()
        .map(|inst| Ok(inst.weighted(infer_placement(model, &inst.app, &inst.devices)?.point, weights)))
        .collect::<Result<_>>()?;
    Ok(mean(&values))
}

/// Mean weighted objective of a baseline over `instances`; random placements
/// use the instance index as seed.
pub fn evaluate_baseline(kind: StrategyKind, instances: &[Instance], weights: WeightVector, seed: u64) -> Result<f64> {
    let values = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let p = run_baseline(kind, &inst.app, &inst.devices, mix(seed ^ i as u64));
            Ok(inst.weighted(evaluate(&inst.app, &p, &inst.devices)?, weights))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&values))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub mean_reward: f64,
    /// Mean weighted objective reached by the sampled rollouts.
    pub mean_objective: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
    pub test_metric: Option<f64>,
    pub best_metric: f64,
}

/// Callbacks fired during training.
pub trait TrainObserver {
    fn episode(&mut self, _metrics: &EpisodeMetrics) -> Result<()> {
        Ok(())
    }

    /// A new best model on the test set.
    fn best(&mut self, _model: &PolicyModel, _episode: usize, _metric: f64) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: PolicyModel,
    pub best_metric: f64,
    pub best_episode: usize,
    pub last: PolicyModel,
    pub metrics: Vec<EpisodeMetrics>,
    pub episodes_run: usize,
}

/// Trains from a fresh model.
pub fn train(config: &TrainConfig, data: &Datasets, observer: &mut impl TrainObserver) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, Split::Init, 0));
    let model = PolicyModel::new(config.policy_config(), &mut rng)?;
    train_from(model, config, data, observer)
}

/// Trains `model` for `config.episodes` episodes with a fresh optimizer.
pub fn train_from(
    mut model: PolicyModel,
    config: &TrainConfig,
    data: &Datasets,
    observer: &mut impl TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    if model.config != config.policy_config() {
        return Err(Error::Core(fogforge_core::Error::Architecture(
            "initial model does not match the configured policy".into(),
        )));
    }
    let mut optimizer = OptimizerState::new(&config.adam, &model.store)?;
    let mut best_metric = evaluate_policy(&model, &data.test, config.weights)?;
    let mut best = model.clone();
    let mut best_episode = 0;
    observer.best(&best, 0, best_metric)?;
    let mut metrics = Vec::with_capacity(config.episodes);
    for episode in 1..=config.episodes {
        let trajectories = collect(&model, config, episode)?;
        let mean_reward = mean(&trajectories.iter().map(|(t, _)| t.total_reward()).collect::<Vec<_>>());
        let mean_objective = mean(&trajectories.iter().map(|(t, inst)| inst.weighted(t.final_point, config.weights)).collect::<Vec<_>>());
        let trajectories: Vec<Trajectory> = trajectories.into_iter().map(|(t, _)| t).collect();
        let report = ppo_update(&mut model, &mut optimizer, &trajectories, &config.ppo).map_err(|e| match e {
            fogforge_core::Error::Divergence(message) => {
                Error::Divergence { message: format!("episode {episode}: {message}"), checkpoint: None }
            }
            other => other.into(),
        })?;
        let learning_rate = optimizer.adam.learning_rate;
        optimizer.end_of_episode();
        let mut test_metric = None;
        if episode % config.eval_interval == 0 || episode == config.episodes {
            let m = evaluate_policy(&model, &data.test, config.weights)?;
            if !m.is_finite() {
                return Err(Error::Divergence { message: format!("episode {episode}: test metric {m}"), checkpoint: None });
            }
            if m < best_metric {
                best_metric = m;
                best = model.clone();
                best_episode = episode;
                observer.best(&best, episode, m)?;
            }
            test_metric = Some(m);
        }
        let last = report.last();
        let row = EpisodeMetrics {
            episode,
            mean_reward,
            mean_objective,
            policy_loss: last.policy_loss,
            value_loss: last.value_loss,
            entropy: last.entropy,
            total_loss: last.total_loss,
            grad_norm: last.grad_norm,
            learning_rate,
            test_metric,
            best_metric,
        };
        observer.episode(&row)?;
        metrics.push(row);
    }
    Ok(TrainOutcome { best, best_metric, best_episode, last: model, metrics, episodes_run: config.episodes })
}

fn collect(model: &PolicyModel, config: &TrainConfig, episode: usize) -> Result<Vec<(Trajectory, Instance)>> {
    (0..config.envs_per_episode)
        .into_par_iter()
        .map(|env| {
            let inst = train_instance(config, episode, env)?;
            let mut rng = rollout_rng(config.seed, episode, env);
            let t = rollout(model, &inst.app, &inst.devices, inst.norms, config.weights, SelectionMode::Sample, &mut rng)?;
            Ok((t, inst))
        })
        .collect()
}
