mod common;

use common::kitchen;
use medoe::doe::DoeClassifier;
use medoe::env::Task;
use medoe::overcooked::{expert_doe_kitchen, Kitchen, KitchenExpert, Side, Variant, HORIZON};
use medoe::rng::component_rng;

#[test]
fn scripted_team_completes_the_target_recipe_with_exact_reward() {
    let task = Kitchen::new(Variant::Target);
    for seed in 0..100 {
        let mut rng = component_rng(seed, "scripted");
        let (mut state, _) = task.reset(&mut rng).unwrap();
        let mut rewards = Vec::new();
        let mut steps = 0;
        loop {
            let actions: Vec<usize> = (0..2).map(|i| task.scripted_action(&state, i)).collect();
            let tr = task.step(&mut state, &actions, &mut rng).unwrap();
            steps += 1;
            if tr.reward != 0.0 {
                rewards.push(tr.reward);
            }
            if tr.done || tr.truncated {
                assert!(tr.done, "seed {seed}: truncated after {steps} steps");
                break;
            }
        }
        assert!(steps <= HORIZON);
        assert_eq!(rewards, vec![0.267, 0.267, 0.476], "seed {seed}");
        assert_eq!(rewards.iter().sum::<f64>(), 0.267 + 0.267 + 0.476);
    }
}

#[test]
fn expert_rule_matches_hand_truth_table() {
    let task = Kitchen::new(Variant::Target);
    let table = kitchen::truth_table();
    assert_eq!(table.len(), 50);
    for (k, &(tomato, plate, chopped, left, right)) in table.iter().enumerate() {
        let state = kitchen::state(tomato, plate, chopped);
        assert_eq!(expert_doe_kitchen(Side::Left, &state), left, "case {k} left");
        assert_eq!(expert_doe_kitchen(Side::Right, &state), right, "case {k} right");
        for agent in 0..2 {
            let obs = task.encode_observation(&state, agent);
            assert_eq!(KitchenExpert { role: Side::Left }.predict(&obs), f64::from(left), "case {k} agent {agent}");
            assert_eq!(KitchenExpert { role: Side::Right }.predict(&obs), f64::from(right), "case {k} agent {agent}");
        }
    }
}
