//! Task abstraction, vectorised episode execution and rollout collection.

use std::collections::VecDeque;

use rand::Rng as _;
use rayon::prelude::*;

use crate::doe::DoeClassifier;
use crate::error::{Error, Result};
use crate::funcapprox::{CriticParams, PolicyParams};
use crate::medoe::BoostConfig;
use crate::rng::{stream_rng, Rng};

/// Flat feature vector plus the discrete state id used by tabular approximators.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
    pub state_id: usize,
}

/// Static description of a common-reward multi-agent task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task_id: String,
    pub num_agents: usize,
    pub action_counts: Vec<usize>,
    pub obs_dims: Vec<usize>,
    /// Number of discrete states, when the task supports tabular methods.
    pub num_states: Option<usize>,
    pub horizon: usize,
    pub discount: f64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::config(format!("{}: no agents", self.task_id)));
        }
        if self.action_counts.len() != self.num_agents || self.obs_dims.len() != self.num_agents {
            return Err(Error::config(format!("{}: per-agent arrays have wrong length", self.task_id)));
        }
        if self.action_counts.iter().chain(&self.obs_dims).any(|&n| n == 0) {
            return Err(Error::config(format!("{}: empty action or observation space", self.task_id)));
        }
        if self.horizon == 0 {
            return Err(Error::config(format!("{}: horizon must be positive", self.task_id)));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::config(format!("{}: discount {} outside (0, 1]", self.task_id, self.discount)));
        }
        Ok(())
    }

    pub fn check_actions(&self, actions: &[usize]) -> Result<()> {
        if actions.len() != self.num_agents {
            return Err(Error::arg(format!(
                "expected {} actions, got {}",
                self.num_agents,
                actions.len()
            )));
        }
        for (i, (&a, &n)) in actions.iter().zip(&self.action_counts).enumerate() {
            if a >= n {
                return Err(Error::arg(format!("agent {i}: action {a} out of range 0..{n}")));
            }
        }
        Ok(())
    }
}

/// One environment step. `done` marks a terminal state; `truncated` marks
/// horizon expiry. At most one of them is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<Observation>,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub next_obs: Vec<Observation>,
    pub done: bool,
    pub truncated: bool,
}

pub trait Task: Send + Sync {
    type State: Clone + Send + Sync + std::fmt::Debug;

    fn spec(&self) -> &TaskSpec;

    /// Fresh episode. Implementations validate their configuration here.
    fn reset(&self, rng: &mut Rng) -> Result<(Self::State, Vec<Observation>)>;

    fn observe(&self, state: &Self::State) -> Vec<Observation>;

    fn step(&self, state: &mut Self::State, actions: &[usize], rng: &mut Rng) -> Result<Transition>;
}

/// Per-agent slice of a rollout. Index `step * num_envs + env`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentRollout {
    pub obs: Vec<Observation>,
    pub actions: Vec<usize>,
    /// `ln pi(a|o)` at the temperature the action was sampled with.
    pub log_prob_behaviour: Vec<f64>,
    /// `ln pi(a|o)` at the base temperature, under the collecting parameters.
    pub log_prob_base: Vec<f64>,
    pub doe: Vec<f64>,
    pub temperature: Vec<f64>,
    pub values: Vec<f64>,
    /// `V(o')` for the true successor observation (before any auto-reset).
    pub next_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub agents: Vec<AgentRollout>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub truncated: Vec<bool>,
    pub n_steps: usize,
    pub num_envs: usize,
    pub base_temperature: f64,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.n_steps * self.num_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, step: usize, env: usize) -> usize {
        step * self.num_envs + env
    }
}

/// What a rollout needs from each agent.
#[derive(Clone, Copy)]
pub struct AgentView<'a> {
    pub policy: &'a PolicyParams,
    pub critic: &'a CriticParams,
    pub classifier: &'a dyn DoeClassifier,
}

#[derive(Debug, Clone)]
struct EnvSlot<S> {
    state: S,
    obs: Vec<Observation>,
    rng: Rng,
    episode_return: f64,
}

struct StepRecord {
    obs: Vec<Observation>,
    actions: Vec<usize>,
    log_prob_behaviour: Vec<f64>,
    log_prob_base: Vec<f64>,
    doe: Vec<f64>,
    temperature: Vec<f64>,
    values: Vec<f64>,
    next_values: Vec<f64>,
    reward: f64,
    done: bool,
    truncated: bool,
    finished_return: Option<f64>,
}

/// Parallel copies of one task, each with its own state and random stream.
pub struct VecEnv<T: Task> {
    task: T,
    slots: Vec<EnvSlot<T::State>>,
    recent_returns: VecDeque<f64>,
    episodes_finished: u64,
    steps: u64,
    parallel: bool,
}

const RETURN_WINDOW: usize = 100;

impl<T: Task> VecEnv<T> {
    /// Environment `i` draws from stream `i` of `seed`.
    pub fn new(task: T, num_envs: usize, seed: u64) -> Result<Self> {
        task.spec().validate()?;
        if num_envs == 0 {
            return Err(Error::config("need at least one environment"));
        }
        let slots = (0..num_envs)
            .map(|i| {
                let mut rng = stream_rng(seed, i as u64);
                let (state, obs) = task.reset(&mut rng)?;
                Ok(EnvSlot {
                    state,
                    obs,
                    rng,
                    episode_return: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            task,
            slots,
            recent_returns: VecDeque::with_capacity(RETURN_WINDOW),
            episodes_finished: 0,
            steps: 0,
            parallel: false,
        })
    }

    /// Step environments on the rayon pool. Results do not depend on this flag.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn task(&self) -> &T {
        &self.task
    }

    pub fn num_envs(&self) -> usize {
        self.slots.len()
    }

    /// Environment steps taken so far, summed over environments.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn episodes_finished(&self) -> u64 {
        self.episodes_finished
    }

    /// Returns of the most recent (up to 100) finished episodes.
    pub fn recent_returns(&self) -> &VecDeque<f64> {
        &self.recent_returns
    }

    pub fn current_observations(&self, env: usize) -> &[Observation] {
        &self.slots[env].obs
    }

    fn step_slot(task: &T, slot: &mut EnvSlot<T::State>, agents: &[AgentView<'_>], boost: &BoostConfig) -> Result<StepRecord> {
        let n = agents.len();
        let mut rec = StepRecord {
            obs: slot.obs.clone(),
            actions: Vec::with_capacity(n),
            log_prob_behaviour: Vec::with_capacity(n),
            log_prob_base: Vec::with_capacity(n),
            doe: Vec::with_capacity(n),
            temperature: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            next_values: Vec::with_capacity(n),
            reward: 0.0,
            done: false,
            truncated: false,
            finished_return: None,
        };
        for (agent, obs) in agents.iter().zip(&slot.obs) {
            let d = agent.classifier.predict(obs);
            let temperature = boost.temperature(d)?;
            let logits = agent.policy.logits(obs);
            let behaviour = crate::funcapprox::Categorical::from_logits(&logits, temperature)?;
            let action = behaviour.sample_with(slot.rng.gen::<f64>());
            let base = crate::funcapprox::Categorical::from_logits(&logits, boost.base_temperature)?;
            rec.actions.push(action);
            rec.log_prob_behaviour.push(behaviour.log_prob(action));
            rec.log_prob_base.push(base.log_prob(action));
            rec.doe.push(d);
            rec.temperature.push(temperature);
            rec.values.push(agent.critic.value(obs));
        }
        let tr = task.step(&mut slot.state, &rec.actions, &mut slot.rng)?;
        for (agent, next) in agents.iter().zip(&tr.next_obs) {
            rec.next_values.push(agent.critic.value(next));
        }
        rec.reward = tr.reward;
        rec.done = tr.done;
        rec.truncated = tr.truncated;
        slot.episode_return += tr.reward;
        if tr.done || tr.truncated {
            rec.finished_return = Some(slot.episode_return);
            slot.episode_return = 0.0;
            let (state, obs) = task.reset(&mut slot.rng)?;
            slot.state = state;
            slot.obs = obs;
        } else {
            slot.obs = tr.next_obs;
        }
        Ok(rec)
    }

    /// Run `n_steps` in every environment, sampling each agent's action at its
    /// boosted temperature `T_base * B_T^(1 - d)`.
    pub fn collect_rollout(&mut self, agents: &[AgentView<'_>], boost: &BoostConfig, n_steps: usize) -> Result<RolloutBatch> {
        let spec = self.task.spec();
        if agents.len() != spec.num_agents {
            return Err(Error::config(format!(
                "{} agents supplied for a {}-agent task",
                agents.len(),
                spec.num_agents
            )));
        }
        if n_steps == 0 {
            return Err(Error::config("n_steps must be positive"));
        }
        let num_envs = self.slots.len();
        let total = n_steps * num_envs;
        let mut batch = RolloutBatch {
            agents: vec![AgentRollout::default(); agents.len()],
            rewards: Vec::with_capacity(total),
            dones: Vec::with_capacity(total),
            truncated: Vec::with_capacity(total),
            n_steps,
            num_envs,
            base_temperature: boost.base_temperature,
        };
        for _ in 0..n_steps {
            let task = &self.task;
            let records: Vec<StepRecord> = if self.parallel {
                self.slots
                    .par_iter_mut()
                    .map(|slot| Self::step_slot(task, slot, agents, boost))
                    .collect::<Result<_>>()?
            } else {
                self.slots
                    .iter_mut()
                    .map(|slot| Self::step_slot(task, slot, agents, boost))
                    .collect::<Result<_>>()?
            };
            for rec in records {
                for (i, ag) in batch.agents.iter_mut().enumerate() {
                    ag.obs.push(rec.obs[i].clone());
                    ag.actions.push(rec.actions[i]);
                    ag.log_prob_behaviour.push(rec.log_prob_behaviour[i]);
                    ag.log_prob_base.push(rec.log_prob_base[i]);
                    ag.doe.push(rec.doe[i]);
                    ag.temperature.push(rec.temperature[i]);
                    ag.values.push(rec.values[i]);
                    ag.next_values.push(rec.next_values[i]);
                }
                batch.rewards.push(rec.reward);
                batch.dones.push(rec.done);
                batch.truncated.push(rec.truncated);
                if let Some(ret) = rec.finished_return {
                    if self.recent_returns.len() == RETURN_WINDOW {
                        self.recent_returns.pop_front();
                    }
                    self.recent_returns.push_back(ret);
                    self.episodes_finished += 1;
                }
            }
            self.steps += num_envs as u64;
        }
        Ok(batch)
    }
}

/// Summary of a batch of evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub returns: Vec<f64>,
    pub mean_return: f64,
    pub ci95: f64,
    /// Mean classifier output over every observation each agent saw.
    pub doe_rate: Vec<f64>,
}

/// `1.96 * s / sqrt(n)` with the sample standard deviation `s`.
pub fn mean_and_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Run `episodes` full episodes sampling every agent at `temperature`.
/// Episode `k` uses stream `k` of `seed`.
pub fn evaluate<T: Task>(
    task: &T,
    policies: &[&PolicyParams],
    classifiers: &[&dyn DoeClassifier],
    temperature: f64,
    episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    let spec = task.spec();
    if policies.len() != spec.num_agents || classifiers.len() != spec.num_agents {
        return Err(Error::config("evaluation needs one policy and classifier per agent"));
    }
    if episodes == 0 {
        return Err(Error::arg("need at least one evaluation episode"));
    }
    let results: Vec<(f64, Vec<f64>, usize)> = (0..episodes)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let (mut state, mut obs) = task.reset(&mut rng)?;
            let mut ret = 0.0;
            let mut doe_sum = vec![0.0; policies.len()];
            let mut visits = 0;
            loop {
                let mut actions = Vec::with_capacity(policies.len());
                for (i, (p, o)) in policies.iter().zip(&obs).enumerate() {
                    doe_sum[i] += classifiers[i].predict(o);
                    let dist = p.distribution(o, temperature)?;
                    actions.push(dist.sample_with(rng.gen::<f64>()));
                }
                visits += 1;
                let tr = task.step(&mut state, &actions, &mut rng)?;
                ret += tr.reward;
                if tr.done || tr.truncated {
                    break;
                }
                obs = tr.next_obs;
            }
            Ok((ret, doe_sum, visits))
        })
        .collect::<Result<_>>()?;
    let returns: Vec<f64> = results.iter().map(|r| r.0).collect();
    let total_visits: usize = results.iter().map(|r| r.2).sum();
    let doe_rate = (0..policies.len())
        .map(|i| results.iter().map(|r| r.1[i]).sum::<f64>() / total_visits as f64)
        .collect();
    let (mean_return, ci95) = mean_and_ci95(&returns);
    Ok(EvalStats {
        returns,
        mean_return,
        ci95,
        doe_rate,
    })
}
