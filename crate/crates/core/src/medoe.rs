//! DoE-modulated fine-tuning: per-sample boosts of temperature, entropy,
//! clip and KL coefficients, importance reweighting back to the base
//! temperature, and the adjustment-stage training loop.

use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doe::DoeClassifier;
use crate::env::{evaluate, EvalStats, Observation, RolloutBatch, Task};
use crate::error::{Error, Result};
use crate::funcapprox::{BehaviourPrior, PolicyParams};
use crate::ppo::{
    actor_objective, compute_returns_and_advantages, critic_objective, train, update_agent, ActorSample, AgentLearner,
    AgentUpdate, Coefficients, Flow, PPOConfig, Trainer, UpdateStats,
};
use crate::rng::{derive_seed, Rng};

pub const MIN_WEIGHT: f64 = 1e-3;
pub const MAX_WEIGHT: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostConfig {
    #[serde(rename = "base_temp")]
    pub base_temperature: f64,
    #[serde(rename = "base_ent_coef")]
    pub base_entropy: f64,
    #[serde(rename = "base_kl_coef")]
    pub base_kl: f64,
    #[serde(rename = "base_clip_coef")]
    pub base_clip: f64,
    #[serde(rename = "temp_boost")]
    pub temperature_boost: f64,
    #[serde(rename = "ent_coef_boost")]
    pub entropy_boost: f64,
    #[serde(rename = "kl_coef_boost")]
    pub kl_boost: f64,
    #[serde(rename = "clip_coef_boost")]
    pub clip_boost: f64,
}

impl BoostConfig {
    pub fn chainball() -> Self {
        Self {
            base_temperature: 1.0,
            base_entropy: 1.6e-6,
            base_kl: 1.3e-4,
            base_clip: 2.5e-4,
            temperature_boost: 3.0,
            entropy_boost: 40.0,
            kl_boost: 40.0,
            clip_boost: 400.0,
        }
    }

    pub fn overcooked() -> Self {
        Self {
            base_temperature: 1.0,
            base_entropy: 1.3e-3,
            base_kl: 3.2e-3,
            base_clip: 2e-4,
            temperature_boost: 3.0,
            entropy_boost: 40.0,
            kl_boost: 40.0,
            clip_boost: 400.0,
        }
    }

    /// Every boost 1: the coefficients never move.
    pub fn constant(temperature: f64) -> Self {
        Self {
            base_temperature: temperature,
            base_entropy: 0.0,
            base_kl: 0.0,
            base_clip: 1.0,
            temperature_boost: 1.0,
            entropy_boost: 1.0,
            kl_boost: 1.0,
            clip_boost: 1.0,
        }
    }

    /// The given base coefficients with all boosts 1.
    pub fn unboosted(config: &PPOConfig) -> Self {
        Self {
            base_temperature: 1.0,
            base_entropy: config.entropy_coefficient,
            base_kl: config.kl_coefficient,
            base_clip: config.ppo_clip_coef,
            temperature_boost: 1.0,
            entropy_boost: 1.0,
            kl_boost: 1.0,
            clip_boost: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base_temp", self.base_temperature),
            ("base_clip_coef", self.base_clip),
            ("temp_boost", self.temperature_boost),
            ("ent_coef_boost", self.entropy_boost),
            ("kl_coef_boost", self.kl_boost),
            ("clip_coef_boost", self.clip_boost),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("base_ent_coef", self.base_entropy), ("base_kl_coef", self.base_kl)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be non-negative and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Behaviour temperature `T_base * B_T^(1 - d)`.
    pub fn temperature(&self, d: f64) -> Result<f64> {
        check_doe(d)?;
        Ok(self.base_temperature * self.temperature_boost.powf(1.0 - d))
    }
}

fn check_doe(d: f64) -> Result<()> {
    if (0.0..=1.0).contains(&d) {
        Ok(())
    } else {
        Err(Error::arg(format!("DoE value {d} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatedCoefficients {
    pub doe: f64,
    pub temperature: f64,
    pub entropy: f64,
    pub clip: f64,
    pub kl: f64,
}

impl ModulatedCoefficients {
    pub fn loss_coefficients(&self) -> Coefficients {
        Coefficients {
            entropy: self.entropy,
            kl: self.kl,
            clip: self.clip,
        }
    }
}

/// Non-experts (`d = 0`) get boosted temperature, entropy and clip; experts
/// (`d = 1`) get the boosted KL anchor.
pub fn compute_boosts(d: f64, cfg: &BoostConfig) -> Result<ModulatedCoefficients> {
    check_doe(d)?;
    Ok(ModulatedCoefficients {
        doe: d,
        temperature: cfg.base_temperature * cfg.temperature_boost.powf(1.0 - d),
        entropy: cfg.base_entropy * cfg.entropy_boost.powf(1.0 - d),
        clip: cfg.base_clip * cfg.clip_boost.powf(1.0 - d),
        kl: cfg.base_kl * cfg.kl_boost.powf(d),
    })
}

/// `pi(a|o; T_base) / pi(a|o; T_behaviour)` under the current parameters,
/// clipped to `[1e-3, 1e3]`. Callers treat the result as a constant.
pub fn importance_weight(
    policy: &PolicyParams,
    obs: &Observation,
    action: usize,
    base_temperature: f64,
    behaviour_temperature: f64,
) -> Result<f64> {
    let logits = policy.logits(obs);
    let base = crate::funcapprox::Categorical::from_logits(&logits, base_temperature)?;
    let behaviour = crate::funcapprox::Categorical::from_logits(&logits, behaviour_temperature)?;
    let w = (base.log_prob(action) - behaviour.log_prob(action)).exp();
    Ok(w.clamp(MIN_WEIGHT, MAX_WEIGHT))
}

fn batch_coefficients(batch: &RolloutBatch, agent: usize, boost: &BoostConfig) -> Result<Vec<Coefficients>> {
    batch.agents[agent]
        .doe
        .iter()
        .map(|&d| compute_boosts(d, boost).map(|m| m.loss_coefficients()))
        .collect()
}

fn require_priors(priors: &[BehaviourPrior], agents: usize) -> Result<()> {
    if priors.len() != agents {
        return Err(Error::config(format!(
            "MEDoE needs a behaviour prior per agent ({} given for {agents} agents)",
            priors.len()
        )));
    }
    Ok(())
}

/// Per-agent `(actor loss, critic loss)` on `batch` at the current parameters.
pub fn medoe_losses(
    batch: &RolloutBatch,
    learners: &[AgentLearner],
    priors: &[BehaviourPrior],
    boost: &BoostConfig,
    config: &PPOConfig,
) -> Result<Vec<(f64, f64)>> {
    require_priors(priors, learners.len())?;
    learners
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let ag = &batch.agents[i];
            let coefficients = batch_coefficients(batch, i, boost)?;
            let ra = compute_returns_and_advantages(batch, i, config.discount_rate, config.gae_lambda);
            let weights = (0..batch.len())
                .map(|j| importance_weight(&l.policy, &ag.obs[j], ag.actions[j], batch.base_temperature, ag.temperature[j]))
                .collect::<Result<Vec<_>>>()?;
            let samples: Vec<ActorSample<'_>> = (0..batch.len())
                .map(|j| ActorSample {
                    obs: &ag.obs[j],
                    action: ag.actions[j],
                    advantage: ra.advantages[j],
                    old_log_prob: ag.log_prob_base[j],
                    coefficients: coefficients[j],
                })
                .collect();
            let actor = actor_objective(&l.policy, Some(priors[i].policy()), &samples, Some(&weights), batch.base_temperature)?;
            let obs: Vec<&Observation> = ag.obs.iter().collect();
            let (critic, _) = critic_objective(&l.critic, &obs, &ra.returns, Some(&weights));
            Ok((actor.loss, critic))
        })
        .collect()
}

/// One MEDoE update of every agent on `batch`.
pub fn medoe_update(
    learners: &mut [AgentLearner],
    priors: &[BehaviourPrior],
    batch: &RolloutBatch,
    boost: &BoostConfig,
    config: &PPOConfig,
    rng: &mut Rng,
) -> Result<Vec<UpdateStats>> {
    require_priors(priors, learners.len())?;
    let seeds: Vec<u64> = (0..learners.len()).map(|_| rng.gen()).collect();
    learners
        .par_iter_mut()
        .zip(seeds)
        .enumerate()
        .map(|(i, (learner, s))| {
            let coefficients = batch_coefficients(batch, i, boost)?;
            let job = AgentUpdate {
                batch,
                agent: i,
                coefficients: &coefficients,
                importance: true,
            };
            update_agent(learner, Some(&priors[i]), &job, config, &mut Rng::seed_from_u64(s))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentOptions {
    pub budget_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub parallel_envs: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    /// Adjustment-stage environment steps so far.
    pub step: u64,
    pub stats: EvalStats,
    /// Mean diagnostics of the most recent update, per agent.
    pub update: Vec<UpdateStats>,
}

/// Fine-tune a composed team on the target task, evaluating at `T_base` at
/// step 0, every `eval_interval` steps, and at the end. `on_eval` sees the
/// team at each evaluation point.
pub fn adjustment_train<T: Task + Clone>(
    task: &T,
    learners: &mut [AgentLearner],
    trainer: Trainer<'_>,
    config: &PPOConfig,
    eval_classifiers: &[&dyn DoeClassifier],
    opts: &AdjustmentOptions,
    mut on_eval: impl FnMut(&EvalPoint, &[AgentLearner]) -> Result<()>,
) -> Result<Vec<EvalPoint>> {
    let spec = task.spec();
    for (i, l) in learners.iter().enumerate() {
        l.policy.net.check_input(spec.num_states, spec.obs_dims[i])?;
        l.critic.net.check_input(spec.num_states, spec.obs_dims[i])?;
    }
    if let Trainer::Medoe { classifiers, .. } = trainer {
        let mut probe_rng = crate::rng::component_rng(opts.seed, "probe");
        let (_, obs) = task.reset(&mut probe_rng)?;
        for (c, o) in classifiers.iter().zip(&obs) {
            let d = c.predict(o);
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::config(format!("classifier produced {d} outside [0, 1]")));
            }
        }
    }
    let base_temperature = match trainer {
        Trainer::Medoe { boost, .. } => boost.base_temperature,
        Trainer::Ippo { .. } => 1.0,
    };
    let eval_seed = derive_seed(opts.seed, "eval");
    let eval = |learners: &[AgentLearner]| {
        let policies: Vec<&PolicyParams> = learners.iter().map(|l| &l.policy).collect();
        evaluate(task, &policies, eval_classifiers, base_temperature, opts.eval_episodes, eval_seed)
    };
    let mut points = Vec::new();
    let first = EvalPoint {
        step: 0,
        stats: eval(learners)?,
        update: Vec::new(),
    };
    on_eval(&first, learners)?;
    points.push(first);
    let interval = opts.eval_interval.max(config.batch_steps());
    let mut next_eval = interval;
    let mut last_step = 0;
    let mut last_stats = Vec::new();
    let summary = train(
        task,
        learners,
        trainer,
        config,
        opts.budget_steps,
        opts.seed,
        opts.parallel_envs,
        |p, team| {
            last_step = p.steps;
            last_stats = p.stats.to_vec();
            if p.steps >= next_eval {
                while next_eval <= p.steps {
                    next_eval += interval;
                }
                let point = EvalPoint {
                    step: p.steps,
                    stats: eval(team)?,
                    update: p.stats.to_vec(),
                };
                on_eval(&point, team)?;
                points.push(point);
            }
            Ok(Flow::Continue)
        },
    )?;
    if summary.steps > 0 && points.last().map(|p| p.step) != Some(summary.steps) {
        let point = EvalPoint {
            step: last_step,
            stats: eval(learners)?,
            update: last_stats,
        };
        on_eval(&point, learners)?;
        points.push(point);
    }
    Ok(points)
}
