mod common;

use std::sync::Arc;

use medoe::chainball::{generate_tables, Chainball, Variant};
use medoe::env::Task;
use medoe::funcapprox::{Architecture, BehaviourPrior};
use medoe::medoe::{medoe_update, BoostConfig};
use medoe::ppo::{compute_returns_and_advantages, ippo_update, AgentLearner, PPOConfig};
use medoe::rng::component_rng;

#[test]
fn gae_with_unit_lambda_is_the_n_step_advantage_bit_for_bit() {
    for seed in 0..50 {
        let batch = common::random_batch(seed, 1 + (seed as usize % 9), 1 + (seed as usize % 4));
        for gamma in [0.99, 0.9, 1.0] {
            let ra = compute_returns_and_advantages(&batch, 0, gamma, 1.0);
            let oracle = common::horner_advantages(&batch, gamma);
            for (i, (a, o)) in ra.advantages.iter().zip(&oracle).enumerate() {
                assert_eq!(a.to_bits(), o.to_bits(), "seed {seed} gamma {gamma} index {i}: {a} vs {o}");
            }
        }
    }
}

fn team(task: &Chainball, arch: &Architecture, cfg: &PPOConfig, seed: u64) -> Vec<AgentLearner> {
    let mut rng = component_rng(seed, "init");
    let mut team: Vec<AgentLearner> = (0..task.spec().num_agents)
        .map(|i| AgentLearner::fresh(task, i, arch, cfg, &mut rng).unwrap())
        .collect();
    // move away from the uniform start so the prior and ratios matter
    let batch = common::collect_batch(task, &team, cfg, seed);
    ippo_update(&mut team, None, &batch, cfg, &mut component_rng(seed, "warm")).unwrap();
    team
}

#[test]
fn unit_boosts_reproduce_ippo_updates_exactly() {
    let tables = generate_tables(11, Variant::Target, None, &mut component_rng(3, "t")).unwrap();
    let task = Chainball::new(Arc::new(tables));
    for (arch, minibatches) in [
        (Architecture::Tabular, 1),
        (Architecture::Tabular, 4),
        (Architecture::Mlp { hidden: vec![16] }, 2),
    ] {
        let mut cfg = PPOConfig::chainball();
        cfg.ppo_num_minibatches = minibatches;
        cfg.n_steps = 8;
        let start = team(&task, &arch, &cfg, 11);
        let priors: Vec<BehaviourPrior> = team(&task, &arch, &cfg, 12)
            .iter()
            .map(|l| BehaviourPrior::freeze(&l.policy))
            .collect();
        let batch = common::collect_batch(&task, &start, &cfg, 13);
        let mut a = start.clone();
        let mut b = start.clone();
        for round in 0..3 {
            ippo_update(&mut a, Some(&priors), &batch, &cfg, &mut component_rng(round, "u")).unwrap();
            medoe_update(&mut b, &priors, &batch, &BoostConfig::unboosted(&cfg), &cfg, &mut component_rng(round, "u")).unwrap();
        }
        for (x, y) in a.iter().zip(&b) {
            assert_ne!(x.policy, start[0].policy);
            let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(x.policy.net.params()), bits(y.policy.net.params()), "{arch:?}");
            assert_eq!(bits(x.critic.net.params()), bits(y.critic.net.params()), "{arch:?}");
        }
    }
}
