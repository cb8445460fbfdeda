//! The two actor-critics on top of the GIN encoder and their joint PPO
//! update.
//!
//! AC_s scores every service from `[h_g | h_v]` and picks one among the
//! eligible ones. AC_d scores every device from
//! `[device features | candidate features | allocation]`, where the
//! allocation vector has one entry per service, so the device head is tied
//! to the application size it was built for.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvState, PlacementEnv, DEVICE_FEATURES, TASK_FEATURES};
use crate::error::{Error, Result};
use crate::gin::{Gin, GinConfig, GraphEmbedding, GraphInput};
use crate::math;
use crate::model::{Application, DeviceSet, NormalizationBounds, ObjectivePoint, Placement, WeightVector};
use crate::nn::{
    clip_global_norm, Activation, Matrix, Mlp, MlpSpec, NormMode, OptimizerState, ParamGrads, ParamStore, Tape, Var,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub gin: GinConfig,
    /// Services per application; fixes the width of the allocation input.
    pub services: usize,
    pub actor_hidden: usize,
    pub actor_layers: usize,
    pub critic_hidden: usize,
    pub critic_layers: usize,
    pub activation: Activation,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            gin: GinConfig::default(),
            services: 9,
            actor_hidden: 32,
            actor_layers: 5,
            critic_hidden: 32,
            critic_layers: 3,
            activation: Activation::Tanh,
        }
    }
}

impl PolicyConfig {
    pub fn for_services(services: usize) -> Self {
        Self { services, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.gin.validate()?;
        if self.services == 0 || self.actor_hidden == 0 || self.critic_hidden == 0 {
            return Err(Error::Config(format!("invalid policy configuration {self:?}")));
        }
        Ok(())
    }

    pub fn device_input_dim(&self) -> usize {
        DEVICE_FEATURES + TASK_FEATURES + self.services
    }
}

/// GIN plus both actor-critics, all parameters in one store.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub config: PolicyConfig,
    pub store: ParamStore,
    pub gin: Gin,
    pub actor_s: Mlp,
    pub critic_s: Mlp,
    pub actor_d: Mlp,
    pub critic_d: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Sample,
    Greedy,
}

/// One joint decision with the quantities PPO needs later.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub service_log_prob: f64,
    pub device_log_prob: f64,
    pub value_s: f64,
    pub value_d: f64,
}

struct Heads {
    service_logp: Var,
    value_s: Var,
}

impl PolicyModel {
    pub fn new(config: PolicyConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let gin = Gin::new(config.gin.clone(), &mut store, "gin", rng)?;
        let h = config.gin.hidden_dim;
        let act = config.activation;
        let actor_s = Mlp::new(
            MlpSpec::new(2 * h, config.actor_hidden, config.actor_layers, 1, act),
            &mut store,
            "actor_s",
            rng,
        )?;
        let critic_s = Mlp::new(
            MlpSpec::new(h, config.critic_hidden, config.critic_layers, 1, act),
            &mut store,
            "critic_s",
            rng,
        )?;
        let actor_d = Mlp::new(
            MlpSpec::new(config.device_input_dim(), config.actor_hidden, config.actor_layers, 1, act),
            &mut store,
            "actor_d",
            rng,
        )?;
        let critic_d = Mlp::new(
            MlpSpec::new(h + TASK_FEATURES + config.services, config.critic_hidden, config.critic_layers, 1, act),
            &mut store,
            "critic_d",
            rng,
        )?;
        Ok(Self { config, store, gin, actor_s, critic_s, actor_d, critic_d })
    }

    /// Rebuilds the architecture from `config` and installs `store`.
    pub fn from_store(config: PolicyConfig, store: &ParamStore) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(config, &mut rng)?;
        model.store.load_from(store)?;
        Ok(model)
    }

    /// Copies all parameters of `parent`; architectures must match.
    pub fn transfer_from(&mut self, parent: &PolicyModel) -> Result<()> {
        if self.config != parent.config {
            return Err(Error::Architecture("policy configurations differ".into()));
        }
        self.store.load_from(&parent.store)
    }

    fn check_state(&self, graph: &GraphInput, state: &EnvState) -> Result<()> {
        if state.services() != self.config.services || graph.len() != self.config.services {
            return Err(Error::Dimension(format!(
                "model built for {} services, got {}",
                self.config.services,
                state.services()
            )));
        }
        if state.devices() == 0 {
            return Err(Error::Dimension("no devices".into()));
        }
        Ok(())
    }

    pub fn encode(&self, tape: &mut Tape, graph: &GraphInput, state: &EnvState) -> Result<GraphEmbedding> {
        self.check_state(graph, state)?;
        let x = tape.input(graph.node_features(state)?);
        self.gin.forward(tape, &self.store, x, &graph.neighbors, NormMode::Batch)
    }

    fn service_heads(&self, tape: &mut Tape, emb: GraphEmbedding, state: &EnvState) -> Result<Heads> {
        let n = state.services();
        let hg = tape.repeat_rows(emb.pooled, n)?;
        let input = tape.concat_cols(&[hg, emb.nodes])?;
        let logits = self.actor_s.forward(tape, &self.store, input, NormMode::Batch)?;
        let service_logp = tape.masked_log_softmax(logits, &state.eligible)?;
        let value_s = self.critic_s.forward(tape, &self.store, emb.pooled, NormMode::Batch)?;
        Ok(Heads { service_logp, value_s })
    }

    /// Device log-probabilities (`devices x 1`) and the AC_d value.
    fn device_heads(&self, tape: &mut Tape, emb: GraphEmbedding, state: &EnvState, service: usize) -> Result<(Var, Var)> {
        let candidate = state
            .service_features
            .get(service)
            .ok_or_else(|| Error::IllegalAction(format!("unknown service {service}")))?;
        let m = state.devices();
        let mut context = Vec::with_capacity(TASK_FEATURES + state.services());
        context.extend_from_slice(candidate);
        context.extend_from_slice(&state.allocation);
        let context = tape.input(Matrix::from_vec(1, context.len(), context));
        let devices = tape.input(Matrix::from_vec(
            m,
            DEVICE_FEATURES,
            state.device_features.iter().flatten().copied().collect(),
        ));
        let tiled = tape.repeat_rows(context, m)?;
        let input = tape.concat_cols(&[devices, tiled])?;
        let logits = self.actor_d.forward(tape, &self.store, input, NormMode::Batch)?;
        let logp = tape.masked_log_softmax(logits, &vec![true; m])?;
        let critic_input = tape.concat_cols(&[emb.pooled, context])?;
        let value = self.critic_d.forward(tape, &self.store, critic_input, NormMode::Batch)?;
        Ok((logp, value))
    }

    /// Service choice among eligible services with its log-probability.
    pub fn select_service(
        &self,
        graph: &GraphInput,
        state: &EnvState,
        mode: SelectionMode,
        rng: &mut impl Rng,
    ) -> Result<(usize, f64)> {
        let mut tape = Tape::new();
        let emb = self.encode(&mut tape, graph, state)?;
        let heads = self.service_heads(&mut tape, emb, state)?;
        let logp = &tape.value(heads.service_logp).data;
        let s = choose(logp, mode, rng);
        Ok((s, logp[s]))
    }

    /// Device choice for `service` with its log-probability.
    pub fn select_device(
        &self,
        graph: &GraphInput,
        state: &EnvState,
        service: usize,
        mode: SelectionMode,
        rng: &mut impl Rng,
    ) -> Result<(usize, f64)> {
        if !state.eligible.get(service).copied().unwrap_or(false) {
            return Err(Error::IllegalAction(format!("service {service} is not eligible")));
        }
        let mut tape = Tape::new();
        let emb = self.encode(&mut tape, graph, state)?;
        let (logp, _) = self.device_heads(&mut tape, emb, state, service)?;
        let logp = &tape.value(logp).data;
        let d = choose(logp, mode, rng);
        Ok((d, logp[d]))
    }

    /// Probability vectors of both heads; the device distribution is for
    /// `service`.
    pub fn distributions(&self, graph: &GraphInput, state: &EnvState, service: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let emb = self.encode(&mut tape, graph, state)?;
        let heads = self.service_heads(&mut tape, emb, state)?;
        let (dlogp, _) = self.device_heads(&mut tape, emb, state, service)?;
        let probs = |v: Var| tape.value(v).data.iter().map(|&l| math::exp(l)).collect();
        Ok((probs(heads.service_logp), probs(dlogp)))
    }

    /// Both decisions from a single encoding of `state`.
    pub fn act(&self, graph: &GraphInput, state: &EnvState, mode: SelectionMode, rng: &mut impl Rng) -> Result<Decision> {
        let mut tape = Tape::new();
        let emb = self.encode(&mut tape, graph, state)?;
        let heads = self.service_heads(&mut tape, emb, state)?;
        let slogp = &tape.value(heads.service_logp).data;
        let service = choose(slogp, mode, rng);
        let service_log_prob = slogp[service];
        let value_s = tape.scalar(heads.value_s);
        let (dlogp, value_d) = self.device_heads(&mut tape, emb, state, service)?;
        let dlogp = &tape.value(dlogp).data;
        let device = choose(dlogp, mode, rng);
        Ok(Decision {
            action: Action { service, device },
            service_log_prob,
            device_log_prob: dlogp[device],
            value_s,
            value_d: tape.scalar(value_d),
        })
    }
}

/// Argmax (lowest index on ties) or a draw from `exp(logp)`.
fn choose(logp: &[f64], mode: SelectionMode, rng: &mut impl Rng) -> usize {
    let best = || {
        let mut best = 0;
        for (i, &l) in logp.iter().enumerate() {
            if l > logp[best] {
                best = i;
            }
        }
        best
    };
    match mode {
        SelectionMode::Greedy => best(),
        SelectionMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = None;
            for (i, &l) in logp.iter().enumerate() {
                if l == f64::NEG_INFINITY {
                    continue;
                }
                acc += math::exp(l);
                last = Some(i);
                if u < acc {
                    return i;
                }
            }
            last.unwrap_or_else(best)
        }
    }
}

/// One step of experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub decision: Decision,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub graph: GraphInput,
    pub transitions: Vec<Transition>,
    pub initial: ObjectivePoint,
    pub final_point: ObjectivePoint,
    pub weights: WeightVector,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// Discounted reward-to-go at every step.
    pub fn returns(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.transitions.len()];
        let mut acc = 0.0;
        for (i, t) in self.transitions.iter().enumerate().rev() {
            acc = t.reward + gamma * acc;
            out[i] = acc;
        }
        out
    }
}

/// Runs one full episode from the all-in-cloud state.
pub fn rollout(
    model: &PolicyModel,
    app: &Application,
    devices: &DeviceSet,
    norms: NormalizationBounds,
    weights: WeightVector,
    mode: SelectionMode,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let graph = GraphInput::from_application(app);
    let mut env = PlacementEnv::with_norms(app, devices, norms);
    let initial = env.objective();
    let mut transitions = Vec::with_capacity(app.len());
    while !env.is_done() {
        let state = env.state();
        let decision = model.act(&graph, &state, mode, rng)?;
        let outcome = env.step(decision.action, weights)?;
        transitions.push(Transition { state, decision, reward: outcome.reward.r_total, done: outcome.done });
    }
    Ok(Trajectory { graph, transitions, initial, final_point: env.objective(), weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub placement: Placement,
    /// Actions in allocation order.
    pub order: Vec<Action>,
    pub point: ObjectivePoint,
}

/// Greedy placement of every service, one decision at a time.
pub fn infer_placement(model: &PolicyModel, app: &Application, devices: &DeviceSet) -> Result<Inference> {
    if app.len() != model.config.services {
        return Err(Error::Dimension(format!(
            "model built for {} services, application has {}",
            model.config.services,
            app.len()
        )));
    }
    let norms = NormalizationBounds::analytic(app, devices)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let trajectory = rollout(model, app, devices, norms, WeightVector::BALANCED, SelectionMode::Greedy, &mut rng)?;
    let mut env = PlacementEnv::with_norms(app, devices, norms);
    let order: Vec<Action> = trajectory.transitions.iter().map(|t| t.decision.action).collect();
    for &a in &order {
        env.step(a, WeightVector::BALANCED)?;
    }
    Ok(Inference { placement: env.placement(), order, point: env.objective() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub policy_coef: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.25,
            epochs: 2,
            policy_coef: 3.0,
            value_coef: 2.0,
            entropy_coef: 0.023,
            gamma: 1.0,
            normalize_advantages: false,
            max_grad_norm: None,
        }
    }
}

/// Averages over transitions and over both actor-critics for one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub epochs: Vec<EpochReport>,
}

impl UpdateReport {
    pub fn last(&self) -> EpochReport {
        self.epochs.last().copied().unwrap_or_default()
    }
}

/// `-min(rho A, clip(rho, 1 - eps, 1 + eps) A)` with
/// `rho = exp(logp_new - logp_old)`.
pub fn clipped_surrogate(tape: &mut Tape, logp_new: Var, logp_old: f64, advantage: f64, clip: f64) -> Result<Var> {
    let old = tape.input(Matrix::scalar(logp_old));
    let diff = tape.sub(logp_new, old)?;
    let ratio = tape.exp(diff);
    let unclipped = tape.scale(ratio, advantage);
    let clipped = tape.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let clipped = tape.scale(clipped, advantage);
    let surrogate = tape.min(unclipped, clipped)?;
    Ok(tape.scale(surrogate, -1.0))
}

struct Sample<'a> {
    graph: &'a GraphInput,
    transition: &'a Transition,
    target: f64,
    adv_s: f64,
    adv_d: f64,
}

/// Joint PPO update of the GIN and both actor-critics: each epoch
/// recomputes log-probabilities and values for every transition, averages
/// the two actor-critic losses, and takes one optimizer step.
pub fn ppo_update(
    model: &mut PolicyModel,
    optimizer: &mut OptimizerState,
    trajectories: &[Trajectory],
    config: &PpoConfig,
) -> Result<UpdateReport> {
    let mut samples = Vec::new();
    for traj in trajectories {
        for (t, g) in traj.transitions.iter().zip(traj.returns(config.gamma)) {
            samples.push(Sample {
                graph: &traj.graph,
                transition: t,
                target: g,
                adv_s: g - t.decision.value_s,
                adv_d: g - t.decision.value_d,
            });
        }
    }
    if samples.is_empty() {
        return Ok(UpdateReport::default());
    }
    if config.normalize_advantages && samples.len() > 1 {
        let mut adv_s: Vec<f64> = samples.iter().map(|s| s.adv_s).collect();
        let mut adv_d: Vec<f64> = samples.iter().map(|s| s.adv_d).collect();
        standardize(&mut adv_s);
        standardize(&mut adv_d);
        for (s, (a, d)) in samples.iter_mut().zip(adv_s.into_iter().zip(adv_d)) {
            s.adv_s = a;
            s.adv_d = d;
        }
    }
    let scale = 1.0 / samples.len() as f64;
    let mut report = UpdateReport::default();
    for _ in 0..config.epochs {
        let mut grads = model.store.zero_grads();
        let mut epoch = EpochReport::default();
        for sample in &samples {
            let parts = sample_loss(model, sample, config, scale, &mut grads)?;
            epoch.policy_loss += parts[0] * scale;
            epoch.value_loss += parts[1] * scale;
            epoch.entropy += parts[2] * scale;
            epoch.total_loss += parts[3] * scale;
        }
        if !epoch.total_loss.is_finite() || !grads.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss {epoch:?}")));
        }
        epoch.grad_norm = match config.max_grad_norm {
            Some(max) => clip_global_norm(&mut grads, max)?,
            None => grads.global_norm(),
        };
        optimizer.adam.apply(&mut model.store, &grads)?;
        report.epochs.push(epoch);
    }
    Ok(report)
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = math::sqrt(var) + 1e-8;
    for v in values {
        *v = (*v - mean) / std;
    }
}

/// Accumulates the scaled gradient of one transition's loss and returns
/// (policy, value, entropy, total), each averaged over the two heads.
fn sample_loss(
    model: &PolicyModel,
    sample: &Sample<'_>,
    config: &PpoConfig,
    scale: f64,
    grads: &mut ParamGrads,
) -> Result<[f64; 4]> {
    let t = sample.transition;
    let mut tape = Tape::new();
    let emb = model.encode(&mut tape, sample.graph, &t.state)?;
    let heads = model.service_heads(&mut tape, emb, &t.state)?;
    let (dlogp, value_d) = model.device_heads(&mut tape, emb, &t.state, t.decision.action.service)?;
    let target = tape.input(Matrix::scalar(sample.target));
    let mut head = |logp: Var, index: usize, old: f64, adv: f64, value: Var| -> Result<[Var; 3]> {
        let chosen = tape.pick(logp, index)?;
        let policy = clipped_surrogate(&mut tape, chosen, old, adv, config.clip)?;
        let err = tape.sub(value, target)?;
        let value_loss = tape.square(err);
        let entropy = tape.entropy(logp);
        Ok([policy, value_loss, entropy])
    };
    let s = head(heads.service_logp, t.decision.action.service, t.decision.service_log_prob, sample.adv_s, heads.value_s)?;
    let d = head(dlogp, t.decision.action.device, t.decision.device_log_prob, sample.adv_d, value_d)?;
    let mut terms = Vec::new();
    let mut parts = [0.0; 4];
    for (k, coef) in [config.policy_coef, config.value_coef, -config.entropy_coef].into_iter().enumerate() {
        let sum = tape.add(s[k], d[k])?;
        let avg = tape.scale(sum, 0.5);
        parts[k] = tape.scalar(avg);
        terms.push(tape.scale(avg, coef));
    }
    let a = tape.add(terms[0], terms[1])?;
    let total = tape.add(a, terms[2])?;
    parts[3] = tape.scalar(total);
    let loss = tape.scale(total, scale);
    tape.backward(loss)?.accumulate_params(&tape, &model.store, grads);
    Ok(parts)
}
