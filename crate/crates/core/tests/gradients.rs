mod common;

use common::{critic_gradient_error, ActorInstance};

#[test]
fn actor_gradient_matches_differences_on_random_instances() {
    let mut worst: f64 = 0.0;
    for seed in 0..30 {
        let err = ActorInstance::random(seed, seed % 5 == 0).gradient_error();
        assert!(err < 1e-4, "instance {seed}: relative error {err:e}");
        worst = worst.max(err);
    }
    println!("worst actor relative error {worst:e}");
}

#[test]
fn importance_weight_is_held_constant() {
    for seed in 100..110 {
        let inst = ActorInstance::random(seed, false);
        let (frozen, live) = inst.stop_gradient_errors();
        assert!(frozen < 1e-4, "instance {seed}: {frozen:e} against frozen-w differences");
        assert!(live > 1e-3, "instance {seed}: gradient also matches live-w differences ({live:e})");
    }
}

#[test]
fn critic_gradient_matches_differences() {
    for seed in 0..20 {
        let err = critic_gradient_error(seed, seed % 4 == 0);
        assert!(err < 1e-4, "instance {seed}: relative error {err:e}");
    }
}
