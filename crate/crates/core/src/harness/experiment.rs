//! Source stage, team composition and adjustment runs for every baseline.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::chainball::{self, Chainball, ChainballExpert};
use crate::doe::{build_dataset, train_classifier, ConstantDoe, DoeClassifier, LearnedClassifier};
use crate::env::{evaluate, Observation, Task};
use crate::error::{Error, Result};
use crate::funcapprox::{BehaviourPrior, Checkpoint, CriticParams, NamedArray, PolicyParams};
use crate::medoe::{adjustment_train, AdjustmentOptions, BoostConfig, EvalPoint};
use crate::overcooked::{self, Kitchen, KitchenExpert, Side};
use crate::ppo::{train_source_stage, AgentLearner, ReturnProbe, StoppingRule, Trainer};
use crate::rng::{component_rng, derive_seed};

use super::auc::run_auc;
use super::compose::{compose_teams, TeamSpec};
use super::config::{Baseline, EnvKind, ExperimentConfig};
use super::runlog::{RunLog, RunRow};
use super::sweep::{sweep_sample, BoostParam};

type ExactReturn<T> = fn(&T, &[&PolicyParams], f64) -> Result<f64>;

/// A source task and where its agents sit in the target team.
pub struct SourceTask<T> {
    pub name: &'static str,
    pub task: T,
    pub max_return: f64,
    /// `(source agent, target slot)` pairs.
    pub slots: Vec<(usize, usize)>,
}

/// Target task, the two source tasks and the expert classifiers.
pub struct Setup<T> {
    pub env: EnvKind,
    pub target: T,
    pub sources: [SourceTask<T>; 2],
    pub experts: Vec<Box<dyn DoeClassifier>>,
    pub exact: Option<ExactReturn<T>>,
}

impl<T: Task + Clone> Setup<T> {
    pub fn num_agents(&self) -> usize {
        self.target.spec().num_agents
    }

    pub fn expert_refs(&self) -> Vec<&dyn DoeClassifier> {
        self.experts.iter().map(|e| e.as_ref()).collect()
    }
}

pub fn chainball_setup(config: &ExperimentConfig) -> Result<Setup<Chainball>> {
    let n = config.environment.chain_length;
    let seed = derive_seed(config.seed, "tables");
    let target = chainball::generate_tables(n, chainball::Variant::Target, None, &mut component_rng(seed, "target"))?;
    let source = |variant: chainball::Variant, name: &'static str| -> Result<SourceTask<Chainball>> {
        let tables = chainball::generate_tables(n, variant, Some(&target), &mut component_rng(seed, name))?;
        let task = Chainball::new(Arc::new(tables));
        Ok(SourceTask {
            name,
            max_return: task.optimal_return(),
            slots: variant.target_slots().iter().copied().enumerate().collect(),
            task,
        })
    };
    let sources = [source(chainball::Variant::Def, "def")?, source(chainball::Variant::Att, "att")?];
    Ok(Setup {
        env: EnvKind::Chainball,
        experts: (1..=4)
            .map(|agent| Box::new(ChainballExpert { agent, n }) as Box<dyn DoeClassifier>)
            .collect(),
        target: Chainball::new(Arc::new(target)),
        sources,
        exact: Some(|task, policies, t| task.policy_return(policies, t)),
    })
}

pub fn kitchen_setup() -> Setup<Kitchen> {
    let source = |variant, name, slot| SourceTask {
        name,
        task: Kitchen::new(variant),
        max_return: 1.0,
        slots: vec![(slot, slot)],
    };
    Setup {
        env: EnvKind::Overcooked,
        target: Kitchen::new(overcooked::Variant::Target),
        sources: [
            source(overcooked::Variant::Left, "left", 0),
            source(overcooked::Variant::Right, "right", 1),
        ],
        experts: vec![
            Box::new(KitchenExpert { role: Side::Left }),
            Box::new(KitchenExpert { role: Side::Right }),
        ],
        exact: None,
    }
}

/// A trained source sub-team with its observation buffers.
#[derive(Debug, Clone)]
pub struct SourceTeam {
    pub task: String,
    pub index: usize,
    pub seed: u64,
    pub learners: Vec<AgentLearner>,
    pub buffers: Vec<Vec<Observation>>,
    /// All attempts included.
    pub steps: u64,
    pub attempts: usize,
    pub converged: bool,
    /// Evaluation return at the base temperature.
    pub source_return: f64,
}

/// `teams[j][k]` is seed `k` of source task `j`.
#[derive(Debug, Clone)]
pub struct SourcePool {
    pub teams: [Vec<SourceTeam>; 2],
}

impl SourcePool {
    pub fn get(&self, team: &TeamSpec, j: usize) -> &SourceTeam {
        &self.teams[j][if j == 0 { team.first } else { team.second }]
    }

    pub fn team_steps(&self, team: &TeamSpec) -> u64 {
        self.get(team, 0).steps + self.get(team, 1).steps
    }
}

fn source_seed(config: &ExperimentConfig, name: &str, index: usize) -> u64 {
    derive_seed(config.seed, &format!("source/{name}/{index}"))
}

fn source_dir(out: &Path, name: &str, index: usize) -> PathBuf {
    out.join("sources").join(format!("{name}-{index}")).join("source")
}

fn source_hash(config: &ExperimentConfig, name: &str, index: usize) -> String {
    let key = json!({
        "environment": config.environment,
        "ppo": config.ppo(),
        "step_cap": config.budget.source_step_cap,
        "attempts": config.budget.source_attempts,
        "tolerance": config.budget.source_tolerance,
        "buffer": config.buffer_capacity(),
        "eval_episodes": config.budget.eval_episodes,
        "seed": source_seed(config, name, index),
    });
    Sha256::digest(key.to_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn temperature(config: &ExperimentConfig) -> f64 {
    config.boost().base_temperature
}

fn replay_seed(config: &ExperimentConfig, name: &str) -> u64 {
    derive_seed(config.seed, &format!("replay/{name}"))
}

fn replay_return<T: Task + Clone>(source: &SourceTask<T>, policies: &[&PolicyParams], config: &ExperimentConfig) -> Result<f64> {
    let none = ConstantDoe(0.0);
    let classifiers = vec![&none as &dyn DoeClassifier; policies.len()];
    let stats = evaluate(
        &source.task,
        policies,
        &classifiers,
        temperature(config),
        config.budget.eval_episodes,
        replay_seed(config, source.name),
    )?;
    Ok(stats.mean_return)
}

pub fn train_source<T: Task + Clone>(
    setup: &Setup<T>,
    j: usize,
    index: usize,
    config: &ExperimentConfig,
) -> Result<SourceTeam> {
    let source = &setup.sources[j];
    let seed = source_seed(config, source.name, index);
    let rule = StoppingRule {
        max_return: source.max_return,
        tolerance: config.budget.source_tolerance,
        step_cap: config.budget.source_step_cap,
        max_attempts: config.budget.source_attempts,
    };
    let exact = setup.exact.map(|f| {
        move |team: &[AgentLearner]| {
            let p: Vec<&PolicyParams> = team.iter().map(|l| &l.policy).collect();
            f(&source.task, &p, 1.0)
        }
    });
    let probe: Option<ReturnProbe<'_>> = exact.as_ref().map(|f| f as ReturnProbe<'_>);
    let result = train_source_stage(
        &source.task,
        &config.environment.architecture(),
        &config.ppo(),
        &rule,
        config.buffer_capacity(),
        seed,
        config.threaded_envs,
        probe,
    )?;
    let policies: Vec<&PolicyParams> = result.learners.iter().map(|l| &l.policy).collect();
    let source_return = replay_return(source, &policies, config)?;
    log::info!(
        "source {}-{index}: {} steps over {} attempt(s), converged {}, return {source_return:.4}",
        source.name,
        result.steps,
        result.attempts,
        result.converged
    );
    Ok(SourceTeam {
        task: source.name.to_string(),
        index,
        seed,
        buffers: result.buffers.iter().map(|b| b.to_vec()).collect(),
        learners: result.learners,
        steps: result.steps,
        attempts: result.attempts,
        converged: result.converged,
        source_return,
    })
}

/// Actor and critic in one checkpoint of kind `agent`.
pub fn agent_checkpoint(learner: &AgentLearner) -> Checkpoint {
    let mut ckpt = Checkpoint::new("agent");
    for (name, net) in [("actor", &learner.policy.net), ("critic", &learner.critic.net)] {
        let mut part = Checkpoint::from_approximator(name, net);
        let array = part.arrays.remove(0);
        ckpt = ckpt.with_meta(name, Value::Object(part.metadata));
        ckpt.push_array(name, array.shape, array.data);
    }
    ckpt
}

pub fn learner_from_checkpoint(ckpt: &Checkpoint, config: &ExperimentConfig) -> std::result::Result<AgentLearner, String> {
    if ckpt.kind != "agent" {
        return Err(format!("expected an agent checkpoint, found {:?}", ckpt.kind));
    }
    let part = |name: &str| {
        let meta = ckpt
            .metadata
            .get(name)
            .and_then(Value::as_object)
            .ok_or_else(|| format!("missing `{name}` metadata"))?;
        let array = ckpt.array(name).ok_or_else(|| format!("missing `{name}` array"))?;
        Checkpoint {
            kind: name.to_string(),
            metadata: meta.clone(),
            arrays: vec![NamedArray {
                name: "params".into(),
                shape: array.shape.clone(),
                data: array.data.clone(),
            }],
        }
        .to_approximator()
    };
    let critic = CriticParams::new(part("critic")?).map_err(|e| e.to_string())?;
    Ok(AgentLearner::new(PolicyParams::new(part("actor")?), critic, &config.ppo()))
}

fn load_agent(path: &Path, config: &ExperimentConfig) -> Result<AgentLearner> {
    learner_from_checkpoint(&Checkpoint::load(path)?, config).map_err(|msg| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}

fn buffer_checkpoint(buffer: &[Observation]) -> Checkpoint {
    let dim = buffer.first().map_or(0, |o| o.features.len());
    let mut ckpt = Checkpoint::new("buffer");
    ckpt.push_array(
        "features",
        vec![buffer.len(), dim],
        buffer.iter().flat_map(|o| o.features.iter().copied()).collect(),
    );
    ckpt.push_array("state_ids", vec![buffer.len()], buffer.iter().map(|o| o.state_id as f64).collect());
    ckpt
}

fn buffer_from_checkpoint(path: &Path) -> Result<Vec<Observation>> {
    let ckpt = Checkpoint::load(path)?;
    let bad = |msg: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let features = ckpt.array("features").ok_or_else(|| bad("missing features"))?;
    let ids = ckpt.array("state_ids").ok_or_else(|| bad("missing state ids"))?;
    let [len, dim] = features.shape[..] else {
        return Err(bad("features must be 2-d"));
    };
    if ids.data.len() != len {
        return Err(bad("state id count does not match features"));
    }
    Ok((0..len)
        .map(|i| Observation {
            features: features.data[i * dim..(i + 1) * dim].to_vec(),
            state_id: ids.data[i] as usize,
        })
        .collect())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<V: for<'de> Deserialize<'de>>(path: &Path) -> Result<V> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SourceManifest {
    task: String,
    index: usize,
    seed: u64,
    key: String,
    agents: usize,
    steps: u64,
    attempts: usize,
    converged: bool,
    source_return: f64,
}

pub fn save_source(team: &SourceTeam, dir: &Path, key: &str) -> Result<()> {
    for (i, (l, b)) in team.learners.iter().zip(&team.buffers).enumerate() {
        agent_checkpoint(l).save(&dir.join(format!("agent_{i}.ckpt")))?;
        buffer_checkpoint(b).save(&dir.join(format!("agent_{i}.buffer.ckpt")))?;
    }
    // written last so an interrupted save is never mistaken for a cache hit
    write_json(
        &dir.join("manifest.json"),
        &SourceManifest {
            task: team.task.clone(),
            index: team.index,
            seed: team.seed,
            key: key.to_string(),
            agents: team.learners.len(),
            steps: team.steps,
            attempts: team.attempts,
            converged: team.converged,
            source_return: team.source_return,
        },
    )
}

/// `Ok(None)` when nothing usable is cached for this configuration.
pub fn load_source(dir: &Path, key: &str, config: &ExperimentConfig) -> Result<Option<SourceTeam>> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Ok(None);
    }
    let m: SourceManifest = read_json(&manifest_path)?;
    if m.key != key {
        return Ok(None);
    }
    let mut learners = Vec::with_capacity(m.agents);
    let mut buffers = Vec::with_capacity(m.agents);
    for i in 0..m.agents {
        learners.push(load_agent(&dir.join(format!("agent_{i}.ckpt")), config)?);
        buffers.push(buffer_from_checkpoint(&dir.join(format!("agent_{i}.buffer.ckpt")))?);
    }
    Ok(Some(SourceTeam {
        task: m.task,
        index: m.index,
        seed: m.seed,
        learners,
        buffers,
        steps: m.steps,
        attempts: m.attempts,
        converged: m.converged,
        source_return: m.source_return,
    }))
}

/// Load or train `source_seeds` checkpoints per source task. With `out`
/// set, results are cached under `<out>/sources/`.
pub fn prepare_sources<T: Task + Clone>(
    setup: &Setup<T>,
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<SourcePool> {
    let mut teams: [Vec<SourceTeam>; 2] = [Vec::new(), Vec::new()];
    for (j, slot) in teams.iter_mut().enumerate() {
        let name = setup.sources[j].name;
        for index in 0..config.source_seeds {
            let key = source_hash(config, name, index);
            let cached = match out {
                Some(out) => load_source(&source_dir(out, name, index), &key, config)?,
                None => None,
            };
            let team = match cached {
                Some(team) => team,
                None if !config.train_missing_sources => {
                    return Err(Error::config(format!(
                        "no source checkpoint for {name}-{index}; run train-source first"
                    )))
                }
                None => {
                    let team = train_source(setup, j, index, config)?;
                    if let Some(out) = out {
                        save_source(&team, &source_dir(out, name, index), &key)?;
                    }
                    team
                }
            };
            slot.push(team);
        }
    }
    Ok(SourcePool { teams })
}

/// Cached source checkpoints only; nothing is trained.
pub fn load_pool<T: Task + Clone>(setup: &Setup<T>, config: &ExperimentConfig, out: &Path) -> Result<SourcePool> {
    let mut teams: [Vec<SourceTeam>; 2] = [Vec::new(), Vec::new()];
    for (j, slot) in teams.iter_mut().enumerate() {
        let name = setup.sources[j].name;
        for i in 0..config.source_seeds {
            let team = load_source(&source_dir(out, name, i), &source_hash(config, name, i), config)?
                .ok_or_else(|| Error::config(format!("missing source checkpoint {name}-{i}")))?;
            slot.push(team);
        }
    }
    Ok(SourcePool { teams })
}

/// Composed teams used by the experiment, in order.
pub fn experiment_teams(config: &ExperimentConfig) -> Result<Vec<TeamSpec>> {
    let mut teams = compose_teams(config.source_seeds, config.source_seeds, config.allow_partial_teams)?;
    if let Some(max) = config.max_teams {
        teams.truncate(max);
    }
    Ok(teams)
}

pub fn run_id(baseline: Baseline, team: usize, repeat: usize) -> String {
    format!("{baseline}-t{team}-s{repeat}")
}

pub fn run_seed(config: &ExperimentConfig, team: usize, repeat: usize) -> u64 {
    derive_seed(config.seed, &format!("run/{team}/{repeat}"))
}

/// Classifiers for each target slot: own source buffer against the other
/// sub-team's buffers. Returns each classifier's held-out BCE.
pub fn train_team_classifiers<T: Task + Clone>(
    setup: &Setup<T>,
    pool: &SourcePool,
    team: &TeamSpec,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<(LearnedClassifier, f64)>> {
    let mut out: Vec<Option<(LearnedClassifier, f64)>> = (0..setup.num_agents()).map(|_| None).collect();
    for j in 0..2 {
        let own_team = pool.get(team, j);
        let other_team = pool.get(team, 1 - j);
        let negatives: Vec<&[Observation]> = setup.sources[1 - j]
            .slots
            .iter()
            .map(|&(a, _)| other_team.buffers[a].as_slice())
            .collect();
        for &(a, slot) in &setup.sources[j].slots {
            let mut rng = component_rng(seed, &format!("classifier/{slot}"));
            let data = build_dataset(&own_team.buffers[a], &negatives, &mut rng)?;
            let trained = train_classifier(slot, &data, &config.classifier, &mut rng)?;
            log::info!("classifier for agent {}: test BCE {:.4}", slot + 1, trained.1);
            out[slot] = Some(trained);
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::config(format!("no source agent maps to target slot {i}"))))
        .collect()
}

/// Source-task policies for sub-team `j` with the team's current actors
/// swapped in. Partners not taken into the team keep their source actors.
pub fn replay_policies<'a>(
    setup_slots: &[(usize, usize)],
    source: &'a SourceTeam,
    team: &'a [AgentLearner],
) -> Vec<&'a PolicyParams> {
    let mut policies: Vec<&PolicyParams> = source.learners.iter().map(|l| &l.policy).collect();
    for &(a, slot) in setup_slots {
        policies[a] = &team[slot].policy;
    }
    policies
}

pub fn source_returns<T: Task + Clone>(
    setup: &Setup<T>,
    pool: &SourcePool,
    team_spec: &TeamSpec,
    team: &[AgentLearner],
    config: &ExperimentConfig,
) -> Result<Vec<f64>> {
    (0..2)
        .map(|j| {
            let policies = replay_policies(&setup.sources[j].slots, pool.get(team_spec, j), team);
            replay_return(&setup.sources[j], &policies, config)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub baseline: Baseline,
    pub team: TeamSpec,
    pub repeat: usize,
    pub seed: u64,
    pub source_steps: u64,
    pub adjustment_steps: u64,
    pub classifier_bce: Vec<f64>,
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub log: RunLog,
    pub points: Vec<EvalPoint>,
    pub learners: Vec<AgentLearner>,
}

impl RunOutcome {
    pub fn final_return(&self) -> f64 {
        self.log.rows.last().map_or(f64::NAN, |r| r.mean_return)
    }

    pub fn auc(&self) -> Result<f64> {
        run_auc(&self.log.rows.iter().collect::<Vec<_>>())
    }
}

fn save_team(dir: &Path, team: &[AgentLearner]) -> Result<()> {
    for (i, l) in team.iter().enumerate() {
        agent_checkpoint(l).save(&dir.join(format!("agent_{i}.ckpt")))?;
    }
    Ok(())
}

fn load_team(dir: &Path, agents: usize, config: &ExperimentConfig) -> Result<Vec<AgentLearner>> {
    (0..agents)
        .map(|i| load_agent(&dir.join(format!("agent_{i}.ckpt")), config))
        .collect()
}

/// One adjustment run of `baseline` for a composed team and repeat index.
/// `observer` sees the team at every evaluation point.
#[allow(clippy::too_many_arguments)]
pub fn run_team<T: Task + Clone>(
    setup: &Setup<T>,
    pool: Option<&SourcePool>,
    config: &ExperimentConfig,
    baseline: Baseline,
    boost: &BoostConfig,
    team: TeamSpec,
    repeat: usize,
    out: Option<&Path>,
    mut observer: impl FnMut(&EvalPoint, &[AgentLearner]) -> Result<()>,
) -> Result<RunOutcome> {
    let ppo = config.ppo();
    let seed = run_seed(config, team.team_id, repeat);
    let id = run_id(baseline, team.team_id, repeat);
    let k = setup.num_agents();
    let pool = match (baseline.uses_sources(), pool) {
        (false, _) => None,
        (true, Some(pool)) => Some(pool),
        (true, None) => return Err(Error::config(format!("{baseline} needs source checkpoints"))),
    };
    let (mut learners, source_steps) = match pool {
        None => {
            let mut init = component_rng(seed, "init");
            let fresh = (0..k)
                .map(|i| AgentLearner::fresh(&setup.target, i, &config.environment.architecture(), &ppo, &mut init))
                .collect::<Result<Vec<_>>>()?;
            (fresh, 0)
        }
        Some(pool) => {
            let mut slots: Vec<Option<AgentLearner>> = vec![None; k];
            for j in 0..2 {
                let src = pool.get(&team, j);
                for &(a, slot) in &setup.sources[j].slots {
                    let l = &src.learners[a];
                    slots[slot] = Some(AgentLearner::new(l.policy.clone(), l.critic.clone(), &ppo));
                }
            }
            let composed = slots
                .into_iter()
                .enumerate()
                .map(|(i, l)| l.ok_or_else(|| Error::config(format!("target slot {i} has no source agent"))))
                .collect::<Result<Vec<_>>>()?;
            (composed, pool.team_steps(&team))
        }
    };
    let budget = config.budget.total_steps.checked_sub(source_steps).filter(|b| *b > 0).ok_or_else(|| {
        Error::config(format!(
            "team {} used {source_steps} source steps, leaving nothing of the {} step budget",
            team.team_id, config.budget.total_steps
        ))
    })?;
    let priors: Vec<BehaviourPrior> = learners.iter().map(|l| BehaviourPrior::freeze(&l.policy)).collect();
    let learned = match (baseline, pool) {
        (Baseline::MedoeMlp, Some(pool)) => train_team_classifiers(setup, pool, &team, config, seed)?,
        _ => Vec::new(),
    };
    let classifier_bce: Vec<f64> = learned.iter().map(|(_, bce)| *bce).collect();
    let learned_refs: Vec<&dyn DoeClassifier> = learned.iter().map(|(c, _)| c as &dyn DoeClassifier).collect();
    let experts = setup.expert_refs();
    let no_bp = BoostConfig {
        base_kl: 0.0,
        ..boost.clone()
    };
    let trainer = match baseline {
        Baseline::FromScratch | Baseline::PreSkilledNoBp => Trainer::Ippo { priors: None },
        Baseline::PreSkilledBp => Trainer::Ippo { priors: Some(&priors) },
        Baseline::MedoeExpert => Trainer::Medoe {
            priors: &priors,
            classifiers: &experts,
            boost,
        },
        Baseline::MedoeExpertNoBp => Trainer::Medoe {
            priors: &priors,
            classifiers: &experts,
            boost: &no_bp,
        },
        Baseline::MedoeMlp => Trainer::Medoe {
            priors: &priors,
            classifiers: &learned_refs,
            boost,
        },
    };
    let eval_classifiers: &[&dyn DoeClassifier] = if baseline == Baseline::MedoeMlp {
        &learned_refs
    } else {
        &experts
    };
    let opts = AdjustmentOptions {
        budget_steps: budget,
        eval_interval: config.budget.eval_interval,
        eval_episodes: config.budget.eval_episodes,
        seed,
        parallel_envs: config.threaded_envs,
    };
    let run_dir = out.map(|o| o.join(&id).join("adjustment"));
    let mut log = RunLog::new(k, 2);
    let points = adjustment_train(&setup.target, &mut learners, trainer, &ppo, eval_classifiers, &opts, |p, team_now| {
        let total_step = source_steps + p.step;
        let source_return = match pool {
            Some(pool) if config.budget.forgetting => source_returns(setup, pool, &team, team_now, config)?
                .into_iter()
                .map(Some)
                .collect(),
            _ => vec![None, None],
        };
        log::info!(
            "{id} step {total_step}: return {:.4} ± {:.4}",
            p.stats.mean_return,
            p.stats.ci95
        );
        log.push(RunRow {
            run_id: id.clone(),
            baseline: baseline.name().to_string(),
            env: setup.env.name().to_string(),
            team_id: team.team_id,
            seed,
            total_step,
            mean_return: p.stats.mean_return,
            ci95: p.stats.ci95,
            doe_rate: p.stats.doe_rate.clone(),
            source_return,
        })?;
        if let (Some(dir), true) = (&run_dir, config.budget.checkpoint_every_eval) {
            save_team(&dir.join(format!("step_{total_step}")), team_now)?;
        }
        observer(p, team_now)
    })?;
    let manifest = RunManifest {
        run_id: id,
        baseline,
        team,
        repeat,
        seed,
        source_steps,
        adjustment_steps: points.last().map_or(0, |p| p.step),
        classifier_bce,
    };
    if let Some(dir) = &run_dir {
        save_team(dir, &learners)?;
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(RunOutcome {
        manifest,
        log,
        points,
        learners,
    })
}

/// Where `run_experiment` writes its log.
pub fn log_path(config: &ExperimentConfig, out: &Path) -> PathBuf {
    out.join(format!("{}.csv", config.name))
}

fn guard_output(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::config(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn run_all<T: Task + Clone>(setup: &Setup<T>, config: &ExperimentConfig, out: &Path) -> Result<RunLog> {
    let pool = if config.baseline.uses_sources() {
        Some(prepare_sources(setup, config, Some(out))?)
    } else {
        None
    };
    let boost = config.boost();
    let path = log_path(config, out);
    let mut log = RunLog::new(setup.num_agents(), 2);
    for team in experiment_teams(config)? {
        for repeat in 0..config.repeats {
            let outcome = run_team(setup, pool.as_ref(), config, config.baseline, &boost, team, repeat, Some(out), |_, _| Ok(()))?;
            log.extend(outcome.log)?;
            log.write_csv(&path)?;
        }
    }
    log.validate()?;
    Ok(log)
}

/// Every team and repeat of the configured baseline. Writes
/// `<out>/<name>.csv`, per-run checkpoints and the resolved config.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, force: bool) -> Result<RunLog> {
    config.validate()?;
    guard_output(&log_path(config, out), force)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let resolved = ExperimentConfig {
        ppo: Some(config.ppo()),
        medoe: Some(config.boost()),
        ..config.clone()
    };
    let config_path = out.join(format!("{}.config.toml", config.name));
    std::fs::write(&config_path, resolved.to_toml()?).map_err(|e| Error::io(&config_path, e))?;
    match config.environment.kind {
        EnvKind::Chainball => run_all(&chainball_setup(config)?, config, out),
        EnvKind::Overcooked => run_all(&kitchen_setup(), config, out),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSummary {
    pub task: String,
    pub index: usize,
    pub steps: u64,
    pub attempts: usize,
    pub converged: bool,
    pub source_return: f64,
    pub max_return: f64,
}

fn summarize<T: Task + Clone>(setup: &Setup<T>, pool: &SourcePool) -> Vec<SourceSummary> {
    pool.teams
        .iter()
        .enumerate()
        .flat_map(|(j, teams)| {
            teams.iter().map(move |t| SourceSummary {
                task: t.task.clone(),
                index: t.index,
                steps: t.steps,
                attempts: t.attempts,
                converged: t.converged,
                source_return: t.source_return,
                max_return: setup.sources[j].max_return,
            })
        })
        .collect()
}

/// Train (or load cached) source checkpoints only.
pub fn run_source_stage(config: &ExperimentConfig, out: &Path) -> Result<Vec<SourceSummary>> {
    config.validate()?;
    match config.environment.kind {
        EnvKind::Chainball => {
            let setup = chainball_setup(config)?;
            Ok(summarize(&setup, &prepare_sources(&setup, config, Some(out))?))
        }
        EnvKind::Overcooked => {
            let setup = kitchen_setup();
            Ok(summarize(&setup, &prepare_sources(&setup, config, Some(out))?))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComposedTeam {
    pub team: TeamSpec,
    pub first: PathBuf,
    pub second: PathBuf,
    pub source_steps: u64,
}

fn compose_with<T: Task + Clone>(setup: &Setup<T>, config: &ExperimentConfig, out: &Path) -> Result<Vec<ComposedTeam>> {
    let pool = load_pool(setup, config, out)?;
    let teams = experiment_teams(config)?
        .into_iter()
        .map(|team| ComposedTeam {
            first: source_dir(out, setup.sources[0].name, team.first),
            second: source_dir(out, setup.sources[1].name, team.second),
            source_steps: pool.team_steps(&team),
            team,
        })
        .collect::<Vec<_>>();
    write_json(&out.join("teams.json"), &teams)?;
    Ok(teams)
}

/// Pair cached source checkpoints into teams; writes `<out>/teams.json`.
pub fn compose_from_checkpoints(config: &ExperimentConfig, out: &Path) -> Result<Vec<ComposedTeam>> {
    config.validate()?;
    match config.environment.kind {
        EnvKind::Chainball => compose_with(&chainball_setup(config)?, config, out),
        EnvKind::Overcooked => compose_with(&kitchen_setup(), config, out),
    }
}

fn classifiers_with<T: Task + Clone>(setup: &Setup<T>, config: &ExperimentConfig, out: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let pool = prepare_sources(setup, config, Some(out))?;
    let mut report = Vec::new();
    for team in experiment_teams(config)? {
        let seed = run_seed(config, team.team_id, 0);
        for (slot, (clf, bce)) in train_team_classifiers(setup, &pool, &team, config, seed)?.into_iter().enumerate() {
            clf.to_checkpoint()
                .save(&out.join("classifiers").join(format!("team-{}", team.team_id)).join(format!("agent_{slot}.ckpt")))?;
            report.push((team.team_id, slot, bce));
        }
    }
    Ok(report)
}

/// Train and save DoE classifiers for every team; returns `(team, agent, test BCE)`.
pub fn train_classifiers(config: &ExperimentConfig, out: &Path) -> Result<Vec<(usize, usize, f64)>> {
    config.validate()?;
    match config.environment.kind {
        EnvKind::Chainball => classifiers_with(&chainball_setup(config)?, config, out),
        EnvKind::Overcooked => classifiers_with(&kitchen_setup(), config, out),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sample: usize,
    pub parameter: String,
    pub value: f64,
    pub team_id: usize,
    pub seed: u64,
    pub auc: f64,
    pub final_return: f64,
}

fn sweep_with<T: Task + Clone>(
    setup: &Setup<T>,
    config: &ExperimentConfig,
    param: BoostParam,
    samples: usize,
    out: &Path,
) -> Result<Vec<SweepRow>> {
    let baseline = if config.baseline.is_medoe() {
        config.baseline
    } else {
        Baseline::MedoeExpert
    };
    let pool = prepare_sources(setup, config, Some(out))?;
    let teams = experiment_teams(config)?;
    let boosts = sweep_sample(&config.boost(), param, samples, &mut component_rng(config.seed, "sweep"));
    let path = out.join(format!("{}.sweep.{}.csv", config.name, param.name()));
    let mut rows = Vec::with_capacity(samples);
    for (i, boost) in boosts.iter().enumerate() {
        let team = teams[i % teams.len()];
        let repeat = (i / teams.len()) % config.repeats;
        let outcome = run_team(setup, Some(&pool), config, baseline, boost, team, repeat, None, |_, _| Ok(()))?;
        rows.push(SweepRow {
            sample: i,
            parameter: param.name().to_string(),
            value: param.get(boost),
            team_id: team.team_id,
            seed: outcome.manifest.seed,
            auc: outcome.auc()?,
            final_return: outcome.final_return(),
        });
        let mut w = csv::Writer::from_path(&path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(rows)
}

/// One-at-a-time boost sensitivity: `samples` adjustment runs with
/// `param` drawn from its sweep range. Writes `<out>/<name>.sweep.<param>.csv`.
pub fn run_sweep(config: &ExperimentConfig, param: BoostParam, samples: usize, out: &Path, force: bool) -> Result<Vec<SweepRow>> {
    config.validate()?;
    guard_output(&out.join(format!("{}.sweep.{}.csv", config.name, param.name())), force)?;
    match config.environment.kind {
        EnvKind::Chainball => sweep_with(&chainball_setup(config)?, config, param, samples, out),
        EnvKind::Overcooked => sweep_with(&kitchen_setup(), config, param, samples, out),
    }
}

fn forgetting_with<T: Task + Clone>(setup: &Setup<T>, config: &ExperimentConfig, out: &Path) -> Result<RunLog> {
    let path = log_path(config, out);
    let mut log = RunLog::read_csv(&path)?;
    if log.num_subteams != 2 {
        return Err(Error::config(format!("{} has {} sub-team columns", path.display(), log.num_subteams)));
    }
    let mut pool: Option<SourcePool> = None;
    let mut filled = 0;
    let manifests: Vec<(String, RunManifest)> = log
        .runs()
        .into_iter()
        .filter_map(|(id, _)| {
            let m = out.join(&id).join("adjustment").join("manifest.json");
            m.exists().then(|| read_json(&m).map(|m| (id, m)))
        })
        .collect::<Result<_>>()?;
    for row in log.rows.iter_mut() {
        let Some((_, manifest)) = manifests.iter().find(|(id, _)| *id == row.run_id) else {
            continue;
        };
        if !manifest.baseline.uses_sources() {
            continue;
        }
        let dir = out.join(&row.run_id).join("adjustment").join(format!("step_{}", row.total_step));
        if !dir.exists() {
            continue;
        }
        if pool.is_none() {
            pool = Some(load_pool(setup, config, out)?);
        }
        let team = load_team(&dir, setup.num_agents(), config)?;
        let returns = source_returns(setup, pool.as_ref().expect("loaded above"), &manifest.team, &team, config)?;
        row.source_return = returns.into_iter().map(Some).collect();
        filled += 1;
    }
    if filled == 0 {
        return Err(Error::config(format!(
            "no periodic checkpoints found for {}; set budget.checkpoint_every_eval",
            path.display()
        )));
    }
    log.write_csv(&path)?;
    Ok(log)
}

/// Fill the source-return columns of `<out>/<name>.csv` by replaying the
/// periodic adjustment checkpoints in each sub-team's source task.
pub fn evaluate_forgetting(config: &ExperimentConfig, out: &Path) -> Result<RunLog> {
    config.validate()?;
    match config.environment.kind {
        EnvKind::Chainball => forgetting_with(&chainball_setup(config)?, config, out),
        EnvKind::Overcooked => forgetting_with(&kitchen_setup(), config, out),
    }
}
