//! Function approximators and the numeric primitives the trainers share.

mod adam;
pub mod checkpoint;
mod dist;
mod mlp;
mod tabular;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};

pub use adam::{AdamState, ADAM_EPSILON};
pub use checkpoint::{Checkpoint, NamedArray};
pub use dist::{entropy, kl_divergence, softmax, Categorical};
pub use mlp::Mlp;
pub use tabular::Tabular;

/// Hidden sizes used for deep actors and critics.
pub const DEEP_HIDDEN: [usize; 2] = [256, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Architecture {
    Tabular,
    Mlp { hidden: Vec<usize> },
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Tabular
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Approximator {
    Tabular(Tabular),
    Mlp(Mlp),
}

impl Approximator {
    /// Build from an architecture. Tabular needs `num_states`; MLPs need `obs_dim`.
    pub fn build<R: Rng + ?Sized>(
        arch: &Architecture,
        num_states: Option<usize>,
        obs_dim: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        match arch {
            Architecture::Tabular => {
                let states = num_states.ok_or_else(|| {
                    Error::config("tabular approximator requested for a task without discrete states")
                })?;
                Ok(Approximator::Tabular(Tabular::zeros(states, outputs)))
            }
            Architecture::Mlp { hidden } => {
                let mut sizes = Vec::with_capacity(hidden.len() + 2);
                sizes.push(obs_dim);
                sizes.extend_from_slice(hidden);
                sizes.push(outputs);
                Ok(Approximator::Mlp(Mlp::new(&sizes, rng)))
            }
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Approximator::Tabular(t) => t.outputs(),
            Approximator::Mlp(m) => m.output_dim(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Approximator::Tabular(t) => t.params(),
            Approximator::Mlp(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Approximator::Tabular(t) => t.params_mut(),
            Approximator::Mlp(m) => m.params_mut(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().len()
    }

    pub fn forward(&self, obs: &Observation) -> Vec<f64> {
        match self {
            Approximator::Tabular(t) => t.row(obs.state_id).to_vec(),
            Approximator::Mlp(m) => m.forward(&obs.features),
        }
    }

    pub fn accumulate_grad(&self, obs: &Observation, grad_out: &[f64], grads: &mut [f64]) {
        match self {
            Approximator::Tabular(t) => t.accumulate_grad(obs.state_id, grad_out, grads),
            Approximator::Mlp(m) => m.accumulate_grad(&obs.features, grad_out, grads),
        }
    }

    /// Check that observations of this shape can be fed in.
    pub fn check_input(&self, num_states: Option<usize>, obs_dim: usize) -> Result<()> {
        match self {
            Approximator::Tabular(t) => match num_states {
                Some(n) if n == t.num_states() => Ok(()),
                other => Err(Error::config(format!(
                    "tabular approximator has {} states, task has {other:?}",
                    t.num_states()
                ))),
            },
            Approximator::Mlp(m) if m.input_dim() == obs_dim => Ok(()),
            Approximator::Mlp(m) => Err(Error::config(format!(
                "MLP expects {}-dim input, observations are {obs_dim}-dim",
                m.input_dim()
            ))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Approximator::Tabular(_) => "tabular",
            Approximator::Mlp(_) => "mlp",
        }
    }
}

/// Actor: one logit per action.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub net: Approximator,
}

impl PolicyParams {
    pub fn new(net: Approximator) -> Self {
        Self { net }
    }

    pub fn num_actions(&self) -> usize {
        self.net.output_dim()
    }

    pub fn logits(&self, obs: &Observation) -> Vec<f64> {
        self.net.forward(obs)
    }

    pub fn distribution(&self, obs: &Observation, temperature: f64) -> Result<Categorical> {
        Categorical::from_logits(&self.logits(obs), temperature)
    }
}

/// `softmax(logits(obs) / temperature)` for an actor.
pub fn policy_distribution(params: &PolicyParams, obs: &Observation, temperature: f64) -> Result<Vec<f64>> {
    Ok(params.distribution(obs, temperature)?.probs().to_vec())
}

/// Critic: scalar state value.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams {
    pub net: Approximator,
}

impl CriticParams {
    pub fn new(net: Approximator) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::config("critic must have a single output"));
        }
        Ok(Self { net })
    }

    pub fn value(&self, obs: &Observation) -> f64 {
        self.net.forward(obs)[0]
    }
}

/// Frozen copy of a source-stage actor. There is deliberately no mutable access.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviourPrior {
    policy: PolicyParams,
}

impl BehaviourPrior {
    pub fn freeze(policy: &PolicyParams) -> Self {
        Self {
            policy: policy.clone(),
        }
    }

    pub fn policy(&self) -> &PolicyParams {
        &self.policy
    }
}
