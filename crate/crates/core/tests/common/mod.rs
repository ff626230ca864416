#![allow(dead_code)]

use rand::Rng as _;

use medoe::doe::ConstantDoe;
use medoe::env::{AgentRollout, AgentView, Observation, RolloutBatch, Task, VecEnv};
use medoe::funcapprox::{Approximator, Architecture, CriticParams, PolicyParams};
use medoe::medoe::{importance_weight, BoostConfig};
use medoe::ppo::{actor_objective, critic_objective, ActorSample, AgentLearner, Coefficients, PPOConfig};
use medoe::rng::{component_rng, Rng};

pub mod kitchen;

pub const ACTIONS: usize = 4;
pub const OBS_DIM: usize = 5;
pub const STATES: usize = 3;

pub fn random_net(tabular: bool, outputs: usize, rng: &mut Rng) -> Approximator {
    let arch = if tabular {
        Architecture::Tabular
    } else {
        Architecture::Mlp { hidden: vec![6] }
    };
    let mut net = Approximator::build(&arch, Some(STATES), OBS_DIM, outputs, rng).unwrap();
    for p in net.params_mut() {
        *p = rng.gen_range(-1.0..1.0);
    }
    net
}

pub fn random_obs(count: usize, rng: &mut Rng) -> Vec<Observation> {
    (0..count)
        .map(|_| Observation {
            features: (0..OBS_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            state_id: rng.gen_range(0..STATES),
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

/// Central differences of `f` around `params`.
pub fn finite_difference(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let x = p[i];
            p[i] = x + h;
            let up = f(&p);
            p[i] = x - h;
            let down = f(&p);
            p[i] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub struct ActorInstance {
    pub policy: PolicyParams,
    pub prior: PolicyParams,
    pub obs: Vec<Observation>,
    pub actions: Vec<usize>,
    pub advantages: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub coefficients: Vec<Coefficients>,
    pub weights: Vec<f64>,
    pub behaviour_temperatures: Vec<f64>,
    pub base_temperature: f64,
}

impl ActorInstance {
    /// Ratios are kept away from the clip corners so the loss is smooth
    /// within the difference step.
    pub fn random(seed: u64, tabular: bool) -> Self {
        let mut rng = component_rng(seed, "actor-instance");
        let policy = PolicyParams::new(random_net(tabular, ACTIONS, &mut rng));
        let prior = PolicyParams::new(random_net(tabular, ACTIONS, &mut rng));
        let n = 6;
        let obs = random_obs(n, &mut rng);
        let base_temperature = [1.0, 0.7, 2.0][rng.gen_range(0..3)];
        let mut actions = Vec::new();
        let mut old = Vec::new();
        let mut coefficients = Vec::new();
        for o in &obs {
            let a = rng.gen_range(0..ACTIONS);
            let lp = policy.distribution(o, base_temperature).unwrap().log_prob(a);
            let ratio: f64 = [0.5, 0.9, 1.0, 1.07, 1.4][rng.gen_range(0..5)];
            actions.push(a);
            old.push(lp - ratio.ln());
            coefficients.push(Coefficients {
                entropy: rng.gen_range(0.0..0.1),
                kl: rng.gen_range(0.0..0.1),
                clip: 0.2,
            });
        }
        Self {
            policy,
            prior,
            actions,
            advantages: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            old_log_probs: old,
            coefficients,
            weights: (0..n).map(|_| rng.gen_range(0.2..3.0)).collect(),
            behaviour_temperatures: (0..n).map(|_| rng.gen_range(0.5..4.0)).collect(),
            obs,
            base_temperature,
        }
    }

    pub fn samples(&self) -> Vec<ActorSample<'_>> {
        (0..self.obs.len())
            .map(|i| ActorSample {
                obs: &self.obs[i],
                action: self.actions[i],
                advantage: self.advantages[i],
                old_log_prob: self.old_log_probs[i],
                coefficients: self.coefficients[i],
            })
            .collect()
    }

    pub fn loss_at(&self, params: &[f64], weights: &[f64]) -> f64 {
        let mut p = self.policy.clone();
        p.net.params_mut().copy_from_slice(params);
        actor_objective(&p, Some(&self.prior), &self.samples(), Some(weights), self.base_temperature)
            .unwrap()
            .loss
    }

    pub fn weights_at(&self, policy: &PolicyParams) -> Vec<f64> {
        (0..self.obs.len())
            .map(|i| {
                importance_weight(
                    policy,
                    &self.obs[i],
                    self.actions[i],
                    self.base_temperature,
                    self.behaviour_temperatures[i],
                )
                .unwrap()
            })
            .collect()
    }

    /// Relative error between the analytic actor gradient and central differences.
    pub fn gradient_error(&self) -> f64 {
        let eval = actor_objective(
            &self.policy,
            Some(&self.prior),
            &self.samples(),
            Some(&self.weights),
            self.base_temperature,
        )
        .unwrap();
        let fd = finite_difference(self.policy.net.params(), 1e-5, |p| self.loss_at(p, &self.weights));
        rel_error(&eval.grad, &fd)
    }

    /// `(error against differences with w frozen, error against differences
    /// with w recomputed from the perturbed parameters)`.
    pub fn stop_gradient_errors(&self) -> (f64, f64) {
        let w = self.weights_at(&self.policy);
        let eval = actor_objective(&self.policy, Some(&self.prior), &self.samples(), Some(&w), self.base_temperature).unwrap();
        let frozen = finite_difference(self.policy.net.params(), 1e-5, |p| self.loss_at(p, &w));
        let live = finite_difference(self.policy.net.params(), 1e-5, |p| {
            let mut q = self.policy.clone();
            q.net.params_mut().copy_from_slice(p);
            self.loss_at(p, &self.weights_at(&q))
        });
        (rel_error(&eval.grad, &frozen), rel_error(&eval.grad, &live))
    }
}

/// Relative error of the weighted critic gradient against central differences.
pub fn critic_gradient_error(seed: u64, tabular: bool) -> f64 {
    let mut rng = component_rng(seed, "critic-instance");
    let critic = CriticParams::new(random_net(tabular, 1, &mut rng)).unwrap();
    let obs = random_obs(7, &mut rng);
    let refs: Vec<&Observation> = obs.iter().collect();
    let targets: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let weights: Vec<f64> = (0..7).map(|_| rng.gen_range(0.2..3.0)).collect();
    let (_, grad) = critic_objective(&critic, &refs, &targets, Some(&weights));
    let fd = finite_difference(critic.net.params(), 1e-5, |p| {
        let mut c = critic.clone();
        c.net.params_mut().copy_from_slice(p);
        critic_objective(&c, &refs, &targets, Some(&weights)).0
    });
    rel_error(&grad, &fd)
}

/// Random rollout window with episode ends and truncations.
pub fn random_batch(seed: u64, n_steps: usize, num_envs: usize) -> RolloutBatch {
    let mut rng = component_rng(seed, "batch");
    let len = n_steps * num_envs;
    let dones: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.15)).collect();
    let truncated: Vec<bool> = dones.iter().map(|&d| !d && rng.gen_bool(0.1)).collect();
    let agent = AgentRollout {
        obs: random_obs(len, &mut rng),
        actions: vec![0; len],
        log_prob_behaviour: vec![0.0; len],
        log_prob_base: vec![0.0; len],
        doe: vec![0.0; len],
        temperature: vec![1.0; len],
        values: (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        next_values: (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    RolloutBatch {
        agents: vec![agent],
        rewards: (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        dones,
        truncated,
        n_steps,
        num_envs,
        base_temperature: 1.0,
    }
}

/// Discounted n-step return evaluated by Horner's rule from the bootstrap
/// point backwards, then minus the value estimate.
pub fn horner_advantages(batch: &RolloutBatch, gamma: f64) -> Vec<f64> {
    let ag = &batch.agents[0];
    let e = batch.num_envs;
    let mut out = vec![0.0; batch.len()];
    for env in 0..e {
        for t in 0..batch.n_steps {
            let mut end = t;
            loop {
                let i = batch.index(end, env);
                if batch.dones[i] || batch.truncated[i] || end + 1 == batch.n_steps {
                    break;
                }
                end += 1;
            }
            let last = batch.index(end, env);
            let mut g = if batch.dones[last] {
                batch.rewards[last]
            } else {
                batch.rewards[last] + gamma * ag.next_values[last]
            };
            for k in (t..end).rev() {
                g = batch.rewards[batch.index(k, env)] + gamma * g;
            }
            let i = batch.index(t, env);
            out[i] = g - ag.values[i];
        }
    }
    out
}

/// One rollout from `task` with every agent at temperature 1 and `d = 1`.
pub fn collect_batch<T: Task + Clone>(task: &T, learners: &[AgentLearner], config: &PPOConfig, seed: u64) -> RolloutBatch {
    let mut venv = VecEnv::new(task.clone(), config.parallel_environments, seed).unwrap();
    let unit = ConstantDoe(1.0);
    let views: Vec<AgentView<'_>> = learners
        .iter()
        .map(|l| AgentView {
            policy: &l.policy,
            critic: &l.critic,
            classifier: &unit,
        })
        .collect();
    venv.collect_rollout(&views, &BoostConfig::constant(1.0), config.n_steps).unwrap()
}
