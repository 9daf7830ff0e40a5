#![allow(dead_code)]

use blackwell::transforms::{
    affine_reward_map, builtin_instance, ergodic_shatter, isolate_bellman, random_communicating,
    with_reward_dist, GeneratorConfig,
};
use blackwell::{MdpModel, Policy, RewardDist};
use rand::Rng;

/// 200 seeded communicating instances with 2 to 4 states and 2 or 3 actions
/// per state.
pub fn corpus() -> Vec<MdpModel> {
    (0..200u64).map(corpus_instance).collect()
}

pub fn corpus_instance(seed: u64) -> MdpModel {
    random_communicating(&GeneratorConfig {
        state_count: 2 + (seed % 3) as usize,
        min_actions: 2,
        max_actions: 3,
        kernel_sparsity: 0.6,
        seed,
    })
    .expect("generator succeeds")
}

pub fn by_names(model: &MdpModel, names: &[&str]) -> Policy {
    Policy::new(
        names
            .iter()
            .enumerate()
            .map(|(s, n)| model.action_index(s, n).expect("known action"))
            .collect(),
    )
}

/// The figure instance with (goA, stay) isolated at 0.01 and shattered at
/// 0.001, unnormalized.
pub fn shattered_fig() -> (MdpModel, Policy) {
    let fig = builtin_instance("fig-shatter").unwrap();
    let target = by_names(&fig, &["goA", "stay"]);
    let isolated = isolate_bellman(&fig, &target, 0.01, false).unwrap();
    (ergodic_shatter(&isolated, &target, 0.001).unwrap(), target)
}

/// The shattered figure instance mapped onto [0, 1] with Bernoulli rewards.
pub fn certified_fig() -> (MdpModel, Policy) {
    let (shattered, target) = shattered_fig();
    let unit = affine_reward_map(&shattered, 0.0, 1.0).unwrap();
    (with_reward_dist(&unit, RewardDist::Bernoulli).unwrap(), target)
}

/// A random model on the same structure. With `full_support` every row is
/// positive, otherwise rows keep the support of `model`.
pub fn random_direction<R: Rng>(model: &MdpModel, rng: &mut R, full_support: bool) -> MdpModel {
    model
        .map_actions(|_, _, action| {
            for p in action.kernel.iter_mut() {
                if full_support || *p > 0.0 {
                    *p = 1.0 - rng.random::<f64>();
                }
            }
            action.mean = rng.random::<f64>();
        })
        .unwrap()
}

/// `(1 - λ) model + λ other`, rows and rewards alike.
pub fn mix(model: &MdpModel, other: &MdpModel, lambda: f64) -> MdpModel {
    model
        .map_actions(|s, a, action| {
            let o = other.action(s, a);
            for (p, q) in action.kernel.iter_mut().zip(&o.kernel) {
                *p = (1.0 - lambda) * *p + lambda * q;
            }
            action.mean = (1.0 - lambda) * action.mean + lambda * o.mean;
        })
        .unwrap()
}

/// Prints the verdict line of an acceptance criterion and fails the test
/// when it does not hold.
pub fn report(criterion: u32, pass: bool, detail: impl std::fmt::Display) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} {detail}");
    assert!(pass, "criterion {criterion} failed: {detail}");
}
