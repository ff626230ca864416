//! Independent PPO: returns and advantages, the clipped objective, the
//! per-agent update shared with the MEDoE trainer, and the training loop.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doe::{ConstantDoe, DoeClassifier};
use crate::env::{AgentView, Observation, RolloutBatch, Task, VecEnv};
use crate::error::{Error, Result};
use crate::funcapprox::{
    AdamState, Approximator, Architecture, BehaviourPrior, Categorical, CriticParams, PolicyParams, ADAM_EPSILON,
};
use crate::medoe::BoostConfig;
use crate::rng::{component_rng, Rng};

/// Global gradient-norm cap applied when `gradient_clipping` is on.
pub const MAX_GRAD_NORM: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PPOConfig {
    pub discount_rate: f64,
    pub gae_lambda: f64,
    pub n_steps: usize,
    pub parallel_environments: usize,
    pub ppo_epochs: usize,
    pub ppo_num_minibatches: usize,
    pub ppo_clip_coef: f64,
    pub entropy_coefficient: f64,
    pub kl_coefficient: f64,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    #[serde(default = "default_epsilon")]
    pub adam_epsilon: f64,
    #[serde(default)]
    pub ppo_value_clipping: bool,
    #[serde(default)]
    pub gradient_clipping: bool,
}

fn default_epsilon() -> f64 {
    ADAM_EPSILON
}

impl PPOConfig {
    pub fn chainball() -> Self {
        Self {
            discount_rate: 0.99,
            gae_lambda: 0.95,
            n_steps: 4,
            parallel_environments: 8,
            ppo_epochs: 2,
            ppo_num_minibatches: 1,
            ppo_clip_coef: 0.1,
            entropy_coefficient: 1e-5,
            kl_coefficient: 8e-3,
            actor_learning_rate: 1e-2,
            critic_learning_rate: 2e-2,
            adam_epsilon: ADAM_EPSILON,
            ppo_value_clipping: false,
            gradient_clipping: false,
        }
    }

    pub fn overcooked() -> Self {
        Self {
            discount_rate: 0.99,
            gae_lambda: 0.95,
            n_steps: 16,
            parallel_environments: 32,
            ppo_epochs: 2,
            ppo_num_minibatches: 1,
            ppo_clip_coef: 0.1,
            entropy_coefficient: 8e-3,
            kl_coefficient: 8e-3,
            actor_learning_rate: 2e-4,
            critic_learning_rate: 4e-4,
            adam_epsilon: ADAM_EPSILON,
            ppo_value_clipping: false,
            gradient_clipping: false,
        }
    }

    pub fn batch_steps(&self) -> u64 {
        (self.n_steps * self.parallel_environments) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_string()));
        if !(self.discount_rate > 0.0 && self.discount_rate <= 1.0) {
            return fail("discount_rate must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        if !(self.ppo_clip_coef > 0.0) {
            return fail("ppo_clip_coef must be positive");
        }
        if self.ppo_epochs == 0 || self.ppo_num_minibatches == 0 {
            return fail("ppo_epochs and ppo_num_minibatches must be at least 1");
        }
        if self.n_steps == 0 || self.parallel_environments == 0 {
            return fail("n_steps and parallel_environments must be positive");
        }
        if self.ppo_num_minibatches > self.n_steps * self.parallel_environments {
            return fail("more minibatches than samples");
        }
        if !(self.actor_learning_rate > 0.0 && self.critic_learning_rate > 0.0 && self.adam_epsilon > 0.0) {
            return fail("learning rates and adam_epsilon must be positive");
        }
        if self.entropy_coefficient < 0.0 || self.kl_coefficient < 0.0 {
            return fail("entropy and KL coefficients must be non-negative");
        }
        if self.ppo_value_clipping {
            return fail("value clipping is not supported");
        }
        Ok(())
    }
}

/// `(G, A)` for one agent, indexed like the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsAdvantages {
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Truncated GAE over the rollout window, via the lambda-return recursion
/// `G_t = r_t + gamma (1 - done) [(1 - lambda) V(o_{t+1}) + lambda G_{t+1}]`,
/// where `G_{t+1}` is replaced by `V(o_{t+1})` at the window end and after a
/// truncation. `A_t = G_t - V(o_t)`.
pub fn compute_returns_and_advantages(batch: &RolloutBatch, agent: usize, gamma: f64, lambda: f64) -> ReturnsAdvantages {
    let ag = &batch.agents[agent];
    let len = batch.len();
    let e = batch.num_envs;
    let mut returns = vec![0.0; len];
    for env in 0..e {
        for t in (0..batch.n_steps).rev() {
            let i = batch.index(t, env);
            let next_v = ag.next_values[i];
            let tail = if t + 1 == batch.n_steps || batch.truncated[i] {
                next_v
            } else {
                returns[i + e]
            };
            let not_done = if batch.dones[i] { 0.0 } else { 1.0 };
            returns[i] = batch.rewards[i] + gamma * not_done * ((1.0 - lambda) * next_v + lambda * tail);
        }
    }
    let advantages = returns.iter().zip(&ag.values).map(|(g, v)| g - v).collect();
    ReturnsAdvantages { returns, advantages }
}

/// `-min(ratio * A, clip(ratio, 1 - delta, 1 + delta) * A)`.
pub fn ppo_clip_objective(advantage: f64, ratio: f64, delta: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - delta, 1.0 + delta);
    -(ratio * advantage).min(clipped * advantage)
}

/// Derivative of the clipped objective with respect to `ln ratio`.
fn clip_objective_grad(advantage: f64, ratio: f64, delta: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - delta, 1.0 + delta);
    if ratio * advantage <= clipped * advantage {
        -advantage * ratio
    } else {
        0.0
    }
}

/// Per-sample loss coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub entropy: f64,
    pub kl: f64,
    pub clip: f64,
}

/// One actor-loss sample.
#[derive(Debug, Clone, Copy)]
pub struct ActorSample<'a> {
    pub obs: &'a Observation,
    pub action: usize,
    pub advantage: f64,
    /// `ln pi_old(a|o)` at the base temperature.
    pub old_log_prob: f64,
    pub coefficients: Coefficients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorEval {
    pub loss: f64,
    pub clip_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub grad: Vec<f64>,
}

/// Mean over `samples` of
/// `w * PPOClip(A, ratio, delta) - alpha * H(pi) + kappa * KL(pi || prior)`,
/// every distribution at `base_temperature`, and its gradient with `w` held
/// constant. `weights = None` means `w = 1`. Without a prior the KL term is
/// dropped.
pub fn actor_objective(
    policy: &PolicyParams,
    prior: Option<&PolicyParams>,
    samples: &[ActorSample<'_>],
    weights: Option<&[f64]>,
    base_temperature: f64,
) -> Result<ActorEval> {
    if let Some(w) = weights {
        if w.len() != samples.len() {
            return Err(Error::arg("one importance weight per sample required"));
        }
    }
    let mut out = ActorEval {
        loss: 0.0,
        clip_loss: 0.0,
        entropy: 0.0,
        kl: 0.0,
        grad: vec![0.0; policy.net.num_params()],
    };
    if samples.is_empty() {
        return Ok(out);
    }
    let scale = 1.0 / samples.len() as f64;
    for (j, s) in samples.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[j]);
        let c = s.coefficients;
        let dist = policy.distribution(s.obs, base_temperature)?;
        let ratio = (dist.log_prob(s.action) - s.old_log_prob).exp();
        let clip_loss = ppo_clip_objective(s.advantage, ratio, c.clip);
        let entropy = dist.entropy();
        let d_clip = w * clip_objective_grad(s.advantage, ratio, c.clip);
        let mut g: Vec<f64> = dist.grad_log_prob(s.action).iter().map(|v| v * d_clip).collect();
        for (gi, he) in g.iter_mut().zip(dist.grad_entropy()) {
            *gi -= c.entropy * he;
        }
        let mut loss = w * clip_loss - c.entropy * entropy;
        if let Some(prior) = prior {
            let anchor = Categorical::from_logits(&prior.logits(s.obs), base_temperature)?;
            let kl = dist.kl_to(&anchor);
            for (gi, gk) in g.iter_mut().zip(dist.grad_kl_to(&anchor)) {
                *gi += c.kl * gk;
            }
            loss += c.kl * kl;
            out.kl += kl * scale;
        }
        for gi in g.iter_mut() {
            *gi *= scale;
        }
        policy.net.accumulate_grad(s.obs, &g, &mut out.grad);
        out.loss += loss * scale;
        out.clip_loss += clip_loss * scale;
        out.entropy += entropy * scale;
    }
    Ok(out)
}

/// Mean of `w * (G - V(o))^2` and its gradient, `w` held constant.
pub fn critic_objective(
    critic: &CriticParams,
    obs: &[&Observation],
    targets: &[f64],
    weights: Option<&[f64]>,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; critic.net.num_params()];
    if obs.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / obs.len() as f64;
    let mut loss = 0.0;
    for (j, (o, g)) in obs.iter().zip(targets).enumerate() {
        let w = weights.map_or(1.0, |w| w[j]);
        let err = g - critic.value(o);
        loss += w * err * err * scale;
        critic.net.accumulate_grad(o, &[-2.0 * w * err * scale], &mut grad);
    }
    (loss, grad)
}

fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// An agent's actor, critic and their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentLearner {
    pub policy: PolicyParams,
    pub critic: CriticParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl AgentLearner {
    pub fn new(policy: PolicyParams, critic: CriticParams, config: &PPOConfig) -> Self {
        let actor_opt = AdamState::with_epsilon(policy.net.num_params(), config.actor_learning_rate, config.adam_epsilon);
        let critic_opt = AdamState::with_epsilon(critic.net.num_params(), config.critic_learning_rate, config.adam_epsilon);
        Self {
            policy,
            critic,
            actor_opt,
            critic_opt,
        }
    }

    /// Fresh actor (zero logits for tabular) and critic for `agent` of `task`.
    pub fn fresh<T: Task>(task: &T, agent: usize, arch: &Architecture, config: &PPOConfig, rng: &mut Rng) -> Result<Self> {
        let spec = task.spec();
        let obs_dim = spec.obs_dims[agent];
        let actor = Approximator::build(arch, spec.num_states, obs_dim, spec.action_counts[agent], rng)?;
        let critic = Approximator::build(arch, spec.num_states, obs_dim, 1, rng)?;
        Ok(Self::new(PolicyParams::new(actor), CriticParams::new(critic)?, config))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub mean_weight: f64,
    pub gradient_steps: usize,
}

/// What one agent's update consumes from a batch.
pub struct AgentUpdate<'a> {
    pub batch: &'a RolloutBatch,
    pub agent: usize,
    pub coefficients: &'a [Coefficients],
    /// Reweight samples by `pi(a; T_base) / pi(a; T_behaviour)`.
    pub importance: bool,
}

/// `epochs` passes of minibatch Adam steps on the actor and critic losses
/// for one agent. Returns mean diagnostics over all gradient steps.
pub fn update_agent(
    learner: &mut AgentLearner,
    prior: Option<&BehaviourPrior>,
    job: &AgentUpdate<'_>,
    config: &PPOConfig,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    let batch = job.batch;
    let ag = &batch.agents[job.agent];
    let n = batch.len();
    if job.coefficients.len() != n {
        return Err(Error::arg("one coefficient set per sample required"));
    }
    let ra = compute_returns_and_advantages(batch, job.agent, config.discount_rate, config.gae_lambda);
    let mut order: Vec<usize> = (0..n).collect();
    let mb_count = config.ppo_num_minibatches;
    let mut stats = UpdateStats::default();
    for _ in 0..config.ppo_epochs {
        if mb_count > 1 {
            order.shuffle(rng);
        }
        for mb in 0..mb_count {
            let idx = &order[mb * n / mb_count..(mb + 1) * n / mb_count];
            let samples: Vec<ActorSample<'_>> = idx
                .iter()
                .map(|&i| ActorSample {
                    obs: &ag.obs[i],
                    action: ag.actions[i],
                    advantage: ra.advantages[i],
                    old_log_prob: ag.log_prob_base[i],
                    coefficients: job.coefficients[i],
                })
                .collect();
            let weights = if job.importance {
                Some(
                    idx.iter()
                        .map(|&i| {
                            crate::medoe::importance_weight(
                                &learner.policy,
                                &ag.obs[i],
                                ag.actions[i],
                                batch.base_temperature,
                                ag.temperature[i],
                            )
                        })
                        .collect::<Result<Vec<f64>>>()?,
                )
            } else {
                None
            };
            let mut actor = actor_objective(
                &learner.policy,
                prior.map(|p| p.policy()),
                &samples,
                weights.as_deref(),
                batch.base_temperature,
            )?;
            let obs: Vec<&Observation> = idx.iter().map(|&i| &ag.obs[i]).collect();
            let targets: Vec<f64> = idx.iter().map(|&i| ra.returns[i]).collect();
            let (critic_loss, mut critic_grad) = critic_objective(&learner.critic, &obs, &targets, weights.as_deref());
            if config.gradient_clipping {
                clip_grad_norm(&mut actor.grad, MAX_GRAD_NORM);
                clip_grad_norm(&mut critic_grad, MAX_GRAD_NORM);
            }
            learner.actor_opt.step(learner.policy.net.params_mut(), &actor.grad)?;
            learner.critic_opt.step(learner.critic.net.params_mut(), &critic_grad)?;
            stats.actor_loss += actor.loss;
            stats.critic_loss += critic_loss;
            stats.entropy += actor.entropy;
            stats.kl += actor.kl;
            stats.mean_weight += weights.map_or(1.0, |w| w.iter().sum::<f64>() / w.len().max(1) as f64);
            stats.gradient_steps += 1;
        }
    }
    let k = stats.gradient_steps as f64;
    stats.actor_loss /= k;
    stats.critic_loss /= k;
    stats.entropy /= k;
    stats.kl /= k;
    stats.mean_weight /= k;
    if !stats.actor_loss.is_finite() || !stats.critic_loss.is_finite() {
        return Err(Error::numeric(format!("non-finite loss for agent {}", job.agent)));
    }
    Ok(stats)
}

fn agent_rngs(rng: &mut Rng, count: usize) -> Vec<Rng> {
    (0..count).map(|_| Rng::seed_from_u64(rng.gen())).collect()
}

/// Update every agent independently on `batch` with constant coefficients
/// from `config` and unit importance weights. The KL term is present only
/// when priors are given.
pub fn ippo_update(
    learners: &mut [AgentLearner],
    priors: Option<&[BehaviourPrior]>,
    batch: &RolloutBatch,
    config: &PPOConfig,
    rng: &mut Rng,
) -> Result<Vec<UpdateStats>> {
    let c = Coefficients {
        entropy: config.entropy_coefficient,
        kl: config.kl_coefficient,
        clip: config.ppo_clip_coef,
    };
    let coefficients = vec![c; batch.len()];
    let rngs = agent_rngs(rng, learners.len());
    learners
        .par_iter_mut()
        .zip(rngs)
        .enumerate()
        .map(|(i, (learner, mut r))| {
            let job = AgentUpdate {
                batch,
                agent: i,
                coefficients: &coefficients,
                importance: false,
            };
            update_agent(learner, priors.map(|p| &p[i]), &job, config, &mut r)
        })
        .collect()
}

/// How the training loop updates.
#[derive(Clone, Copy)]
pub enum Trainer<'a> {
    Ippo { priors: Option<&'a [BehaviourPrior]> },
    Medoe {
        priors: &'a [BehaviourPrior],
        classifiers: &'a [&'a dyn DoeClassifier],
        boost: &'a BoostConfig,
    },
}

/// State visible to the per-update hook.
pub struct Progress<'a> {
    pub steps: u64,
    pub updates: u64,
    pub recent_returns: &'a VecDeque<f64>,
    pub batch: &'a RolloutBatch,
    pub stats: &'a [UpdateStats],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    pub updates: u64,
    pub episodes: u64,
    pub stopped_early: bool,
}

/// Collect-then-update until `budget_steps` environment steps (rounded down
/// to whole batches) or until the hook asks to stop.
pub fn train<T: Task + Clone>(
    task: &T,
    learners: &mut [AgentLearner],
    trainer: Trainer<'_>,
    config: &PPOConfig,
    budget_steps: u64,
    seed: u64,
    parallel_envs: bool,
    mut hook: impl FnMut(&Progress<'_>, &[AgentLearner]) -> Result<Flow>,
) -> Result<TrainSummary> {
    config.validate()?;
    let k = task.spec().num_agents;
    if learners.len() != k {
        return Err(Error::config(format!("{} learners for a {k}-agent task", learners.len())));
    }
    let mut venv = VecEnv::new(task.clone(), config.parallel_environments, crate::rng::derive_seed(seed, "envs"))?
        .with_parallel(parallel_envs);
    let mut rng = component_rng(seed, "updates");
    let unit = ConstantDoe(1.0);
    let ippo_boost = BoostConfig::constant(1.0);
    let (boost, classifiers): (&BoostConfig, Vec<&dyn DoeClassifier>) = match trainer {
        Trainer::Ippo { .. } => (&ippo_boost, vec![&unit as &dyn DoeClassifier; k]),
        Trainer::Medoe {
            priors,
            classifiers,
            boost,
        } => {
            if priors.len() != k || classifiers.len() != k {
                return Err(Error::config("MEDoE needs a prior and a classifier for every agent"));
            }
            boost.validate()?;
            (boost, classifiers.to_vec())
        }
    };
    let updates = budget_steps / config.batch_steps();
    let mut summary = TrainSummary {
        steps: 0,
        updates: 0,
        episodes: 0,
        stopped_early: false,
    };
    for _ in 0..updates {
        let views: Vec<AgentView<'_>> = learners
            .iter()
            .zip(&classifiers)
            .map(|(l, c)| AgentView {
                policy: &l.policy,
                critic: &l.critic,
                classifier: *c,
            })
            .collect();
        let batch = venv.collect_rollout(&views, boost, config.n_steps)?;
        let stats = match trainer {
            Trainer::Ippo { priors } => ippo_update(learners, priors, &batch, config, &mut rng)?,
            Trainer::Medoe { priors, boost, .. } => {
                crate::medoe::medoe_update(learners, priors, &batch, boost, config, &mut rng)?
            }
        };
        summary.steps = venv.steps();
        summary.updates += 1;
        summary.episodes = venv.episodes_finished();
        let progress = Progress {
            steps: venv.steps(),
            updates: summary.updates,
            recent_returns: venv.recent_returns(),
            batch: &batch,
            stats: &stats,
        };
        if hook(&progress, learners)? == Flow::Stop {
            summary.stopped_early = true;
            break;
        }
    }
    Ok(summary)
}

/// Keeps the most recent `capacity` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RingBuffer {
    capacity: usize,
    items: VecDeque<Observation>,
}

pub const CHAINBALL_BUFFER: usize = 40_000;
pub const OVERCOOKED_BUFFER: usize = 320_000;

impl RingBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, obs: Observation) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(obs);
    }

    pub fn to_vec(&self) -> Vec<Observation> {
        self.items.iter().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.items.iter()
    }
}

/// When to stop source training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    /// Best achievable expected return of the source task.
    pub max_return: f64,
    /// Converged once the measured return is within this fraction of
    /// `|max_return|` of it.
    pub tolerance: f64,
    /// Environment steps allowed per attempt.
    pub step_cap: u64,
    /// Attempts (each from fresh parameters and a new seed) before giving up.
    pub max_attempts: usize,
}

impl StoppingRule {
    pub fn threshold(&self) -> f64 {
        self.max_return - self.tolerance * self.max_return.abs()
    }
}

/// Measures a team's expected return in place of the 100-episode training mean.
pub type ReturnProbe<'a> = &'a (dyn Fn(&[AgentLearner]) -> Result<f64> + Sync);

/// Updates between two probe evaluations.
pub const PROBE_INTERVAL: u64 = 100;

#[derive(Debug, Clone)]
pub struct SourceResult {
    pub learners: Vec<AgentLearner>,
    pub buffers: Vec<RingBuffer>,
    /// Environment steps summed over every attempt.
    pub steps: u64,
    pub attempts: usize,
    pub converged: bool,
    pub final_mean_return: f64,
}

/// Train a source task with IPPO from fresh parameters until the stopping
/// rule fires, keeping each agent's most recent observations. An attempt
/// that hits the step cap is discarded and training restarts from a new
/// seed, up to `max_attempts`; the last attempt is returned either way.
pub fn train_source_stage<T: Task + Clone>(
    task: &T,
    arch: &Architecture,
    config: &PPOConfig,
    rule: &StoppingRule,
    buffer_capacity: usize,
    seed: u64,
    parallel_envs: bool,
    probe: Option<ReturnProbe<'_>>,
) -> Result<SourceResult> {
    if rule.max_attempts == 0 {
        return Err(Error::config("max_attempts must be at least 1"));
    }
    let k = task.spec().num_agents;
    let threshold = rule.threshold();
    let mut total_steps = 0;
    let mut attempt = 0;
    loop {
        let attempt_seed = if attempt == 0 {
            seed
        } else {
            crate::rng::derive_seed(seed, &format!("attempt/{attempt}"))
        };
        attempt += 1;
        let mut init = component_rng(attempt_seed, "init");
        let mut learners = (0..k)
            .map(|i| AgentLearner::fresh(task, i, arch, config, &mut init))
            .collect::<Result<Vec<_>>>()?;
        let mut buffers = vec![RingBuffer::new(buffer_capacity); k];
        let mut converged = false;
        let mut final_mean = f64::NAN;
        let summary = train(
            task,
            &mut learners,
            Trainer::Ippo { priors: None },
            config,
            rule.step_cap,
            attempt_seed,
            parallel_envs,
            |p, team| {
                for (buf, ag) in buffers.iter_mut().zip(&p.batch.agents) {
                    for o in &ag.obs {
                        buf.push(o.clone());
                    }
                }
                match probe {
                    Some(probe) => {
                        if p.updates % PROBE_INTERVAL == 0 {
                            final_mean = probe(team)?;
                        } else {
                            return Ok(Flow::Continue);
                        }
                    }
                    None => {
                        if p.recent_returns.len() < 100 {
                            return Ok(Flow::Continue);
                        }
                        final_mean = p.recent_returns.iter().sum::<f64>() / p.recent_returns.len() as f64;
                    }
                }
                if final_mean >= threshold {
                    converged = true;
                    Ok(Flow::Stop)
                } else {
                    Ok(Flow::Continue)
                }
            },
        )?;
        total_steps += summary.steps;
        if converged || attempt >= rule.max_attempts {
            if !converged {
                log::warn!(
                    "{}: {} attempts of {} steps without convergence (last {:.4}, threshold {:.4})",
                    task.spec().task_id,
                    attempt,
                    rule.step_cap,
                    final_mean,
                    threshold
                );
            }
            return Ok(SourceResult {
                learners,
                buffers,
                steps: total_steps,
                attempts: attempt,
                converged,
                final_mean_return: final_mean,
            });
        }
        log::info!(
            "{}: attempt {attempt} stuck at {final_mean:.4} (threshold {threshold:.4}); reseeding",
            task.spec().task_id
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::AgentRollout;

    fn obs(i: usize) -> Observation {
        Observation {
            features: vec![1.0],
            state_id: i,
        }
    }

    fn single_agent_batch(rewards: Vec<f64>, values: Vec<f64>, next_values: Vec<f64>, dones: Vec<bool>, truncated: Vec<bool>) -> RolloutBatch {
        let n = rewards.len();
        RolloutBatch {
            agents: vec![AgentRollout {
                obs: (0..n).map(obs).collect(),
                actions: vec![0; n],
                log_prob_behaviour: vec![0.0; n],
                log_prob_base: vec![0.0; n],
                doe: vec![1.0; n],
                temperature: vec![1.0; n],
                values,
                next_values,
            }],
            rewards,
            dones,
            truncated,
            n_steps: n,
            num_envs: 1,
            base_temperature: 1.0,
        }
    }

    #[test]
    fn one_step_bootstrap() {
        let b = single_agent_batch(vec![0.0], vec![0.0], vec![1.0], vec![false], vec![false]);
        let ra = compute_returns_and_advantages(&b, 0, 0.99, 0.95);
        assert!((ra.returns[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn two_step_return() {
        let b = single_agent_batch(vec![1.0, 1.0], vec![0.0, 0.0], vec![7.0, 4.0], vec![false; 2], vec![false; 2]);
        let ra = compute_returns_and_advantages(&b, 0, 0.5, 1.0);
        assert_eq!(ra.returns[0], 2.5);
        assert_eq!(ra.returns[1], 3.0);
    }

    #[test]
    fn lambda_zero_is_td() {
        let b = single_agent_batch(
            vec![0.3, -0.2, 1.0],
            vec![0.1, 0.5, -0.4],
            vec![0.5, -0.4, 0.9],
            vec![false, false, true],
            vec![false; 3],
        );
        let ra = compute_returns_and_advantages(&b, 0, 0.9, 0.0);
        for t in 0..3 {
            let nd = if b.dones[t] { 0.0 } else { 1.0 };
            let td = b.rewards[t] + 0.9 * nd * b.agents[0].next_values[t] - b.agents[0].values[t];
            assert!((ra.advantages[t] - td).abs() < 1e-15);
        }
    }

    #[test]
    fn truncation_bootstraps_and_done_does_not() {
        let b = single_agent_batch(vec![0.0, 0.0], vec![0.0, 0.0], vec![2.0, 3.0], vec![false, false], vec![true, false]);
        let ra = compute_returns_and_advantages(&b, 0, 0.5, 1.0);
        assert_eq!(ra.returns[0], 1.0);
        let b = single_agent_batch(vec![1.0, 0.0], vec![0.0, 0.0], vec![2.0, 3.0], vec![true, false], vec![false, false]);
        let ra = compute_returns_and_advantages(&b, 0, 0.5, 1.0);
        assert_eq!(ra.returns[0], 1.0);
    }

    #[test]
    fn clip_objective_examples() {
        assert_eq!(ppo_clip_objective(1.7, 1.0, 0.1), -1.7);
        assert!((ppo_clip_objective(2.0, 1.3, 0.1) + 2.2).abs() < 1e-12);
        assert!((ppo_clip_objective(-1.0, 0.5, 0.1) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ring_buffer_keeps_latest() {
        let mut b = RingBuffer::new(3);
        for i in 0..5 {
            b.push(obs(i));
        }
        let ids: Vec<_> = b.iter().map(|o| o.state_id).collect();
        assert_eq!(ids, vec![2, 3, 4]);
    }

    #[test]
    fn table1_presets_validate() {
        PPOConfig::chainball().validate().unwrap();
        PPOConfig::overcooked().validate().unwrap();
        let mut c = PPOConfig::chainball();
        c.gae_lambda = 1.5;
        assert!(c.validate().is_err());
        let mut c = PPOConfig::chainball();
        c.ppo_value_clipping = true;
        assert!(c.validate().is_err());
    }
}
