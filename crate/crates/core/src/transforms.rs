//! Instance constructions: the builtin examples, seeded random communicating
//! instances, and the penalize / ergodify / rescale transforms used to turn a
//! chosen Bellman optimal policy into the unique gain optimal one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{self, span};
use crate::model::{Action, MdpModel, Policy, RewardDist};

/// Names accepted by [`builtin_instance`].
pub const BUILTIN_NAMES: [&str; 4] = ["fig-shatter", "fig-shatter-01", "single", "two-state-uniform"];

/// Builtin example instances.
///
/// * `fig-shatter`: two states; `s1` has `stay` (2, to `s1`), `goA` and `goB`
///   (3, to `s2`); `s2` has `stay` (2, to `s2`) and `back` (0, to `s1`).
/// * `fig-shatter-01`: the same, rewards mapped onto `[0, 1]` and sampled as
///   Bernoulli variables.
/// * `single`: one state, one action, reward 0.7.
/// * `two-state-uniform`: two states, two actions each with uniform rows and
///   rewards 0.2 / 0.8.
pub fn builtin_instance(name: &str) -> Result<MdpModel> {
    match name {
        "fig-shatter" => MdpModel::with_default_names(vec![
            vec![
                Action::deterministic("stay", 2, 0, 2.0),
                Action::deterministic("goA", 2, 1, 3.0),
                Action::deterministic("goB", 2, 1, 3.0),
            ],
            vec![
                Action::deterministic("stay", 2, 1, 2.0),
                Action::deterministic("back", 2, 0, 0.0),
            ],
        ]),
        "fig-shatter-01" => {
            let fig = builtin_instance("fig-shatter")?;
            with_reward_dist(&affine_reward_map(&fig, 0.0, 1.0)?, RewardDist::Bernoulli)
        }
        "single" => MdpModel::with_default_names(vec![vec![Action::deterministic("a", 1, 0, 0.7)]]),
        "two-state-uniform" => {
            let state = || {
                vec![
                    Action::new("a", vec![0.5, 0.5], 0.2, RewardDist::Bernoulli),
                    Action::new("b", vec![0.5, 0.5], 0.8, RewardDist::Bernoulli),
                ]
            };
            MdpModel::with_default_names(vec![state(), state()])
        }
        other => Err(Error::UnknownInstance(other.to_string())),
    }
}

/// Same model with every reward sampled from `dist`.
pub fn with_reward_dist(model: &MdpModel, dist: RewardDist) -> Result<MdpModel> {
    model.map_actions(|_, _, a| a.dist = dist)
}

/// Penalizes every action that `policy` does not play.
///
/// Rewards are first squeezed by `x ↦ ε + (1 - 2ε) x` (skipped when `raw`),
/// then `ε` is subtracted off-policy. When `policy` is a unichain Bellman
/// optimal policy of `model`, it becomes the unique one; checking that
/// precondition is left to the caller.
pub fn isolate_bellman(model: &MdpModel, policy: &Policy, epsilon: f64, raw: bool) -> Result<MdpModel> {
    model.check_policy(policy)?;
    model.map_actions(|s, a, action| {
        if !raw {
            action.mean = epsilon + (1.0 - 2.0 * epsilon) * action.mean;
        }
        if a != policy.action(s) {
            action.mean -= epsilon;
        }
        keep_law_valid(action);
    })
}

/// A Bernoulli law whose mean left `[0, 1]` becomes a point mass.
fn keep_law_valid(action: &mut Action) {
    if action.dist == RewardDist::Bernoulli && !(0.0..=1.0).contains(&action.mean) {
        action.dist = RewardDist::Point;
    }
}

/// Mixes every row with the uniform law over states and corrects the rewards
/// so that the Poisson equation of `policy` is unchanged:
/// `p'' = (1 - ε) p + ε / |S|`, `r'' = r + (p - p'') · h^π`.
/// The gain of `policy` is preserved when it is constant, as for a unichain
/// policy.
pub fn ergodic_shatter(model: &MdpModel, policy: &Policy, epsilon: f64) -> Result<MdpModel> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "shatter precision must lie in (0, 1), got {epsilon}"
        )));
    }
    let h = eval::evaluate(model, policy, 0)?.bias(0)?.clone();
    let n = model.state_count() as f64;
    model.map_actions(|_, _, action| {
        let mixed: Vec<f64> = action
            .kernel
            .iter()
            .map(|p| (1.0 - epsilon) * p + epsilon / n)
            .collect();
        let sum: f64 = mixed.iter().sum();
        let mixed: Vec<f64> = mixed.into_iter().map(|p| p / sum).collect();
        let correction: f64 = action
            .kernel
            .iter()
            .zip(&mixed)
            .zip(h.iter())
            .map(|((p, q), v)| (p - q) * v)
            .sum();
        action.mean += correction;
        action.kernel = mixed;
        keep_law_valid(action);
    })
}

/// The constant `C = max(1, ½ span(h^π) |S|) + 1` for which the shattered
/// model lies within `C ε` of its input.
pub fn shatter_distance_constant(model: &MdpModel, policy: &Policy) -> Result<f64> {
    let h = eval::evaluate(model, policy, 0)?;
    let spread = 0.5 * span(h.bias(0)?) * model.state_count() as f64;
    Ok(spread.max(1.0) + 1.0)
}

/// Maps rewards affinely so that the smallest becomes `lo` and the largest
/// `hi`. Constant rewards map to `(lo + hi) / 2`.
pub fn affine_reward_map(model: &MdpModel, lo: f64, hi: f64) -> Result<MdpModel> {
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::InvalidConfig(format!("empty reward range [{lo}, {hi}]")));
    }
    let (min, max) = model
        .pairs()
        .map(|(s, a)| model.reward(s, a))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    let width = max - min;
    model.map_actions(|_, _, action| {
        action.mean = if width > 0.0 {
            (lo + (action.mean - min) / width * (hi - lo)).clamp(lo, hi)
        } else {
            0.5 * (lo + hi)
        };
        keep_law_valid(action);
    })
}

/// Parameters of [`random_communicating`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub state_count: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    /// Probability that a kernel entry is nonzero, in `(0, 1]`.
    pub kernel_sparsity: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(state_count: usize, actions: usize, kernel_sparsity: f64, seed: u64) -> Self {
        Self {
            state_count,
            min_actions: actions,
            max_actions: actions,
            kernel_sparsity,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        if self.state_count == 0 || self.min_actions == 0 || self.min_actions > self.max_actions {
            return Err(Error::InvalidConfig(format!("bad generator counts: {self:?}")));
        }
        if !(self.kernel_sparsity > 0.0 && self.kernel_sparsity <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "kernel sparsity must lie in (0, 1], got {}",
                self.kernel_sparsity
            )));
        }
        Ok(())
    }
}

const GENERATION_ATTEMPTS: usize = 100;

/// A seeded random communicating instance with Bernoulli rewards.
///
/// Row weights are uniform, zeroed with probability `1 - sparsity`, then one
/// random action per state is forced to reach the next state on the cycle
/// `s1 -> s2 -> ... -> s1`, which makes the instance communicating.
pub fn random_communicating(config: &GeneratorConfig) -> Result<MdpModel> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.state_count;
    for _ in 0..GENERATION_ATTEMPTS {
        let mut actions = Vec::with_capacity(n);
        for s in 0..n {
            let k = rng.random_range(config.min_actions..=config.max_actions);
            let forced = rng.random_range(0..k);
            let mut list = Vec::with_capacity(k);
            for a in 0..k {
                let mut weights: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < config.kernel_sparsity {
                            1.0 - rng.random::<f64>()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if a == forced && weights[(s + 1) % n] == 0.0 {
                    weights[(s + 1) % n] = 1.0 - rng.random::<f64>();
                }
                if weights.iter().all(|&w| w == 0.0) {
                    weights[rng.random_range(0..n)] = 1.0;
                }
                let sum: f64 = weights.iter().sum();
                let kernel = weights.into_iter().map(|w| w / sum).collect();
                let mean = rng.random::<f64>();
                list.push(Action::new(format!("a{a}"), kernel, mean, RewardDist::Bernoulli));
            }
            actions.push(list);
        }
        let model = MdpModel::with_default_names(actions)?;
        if model.is_communicating() {
            return Ok(model);
        }
    }
    Err(Error::GenerationFailed {
        attempts: GENERATION_ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mdp_distance;

    fn policy(model: &MdpModel, names: &[&str]) -> Policy {
        Policy::new(
            names
                .iter()
                .enumerate()
                .map(|(s, n)| model.action_index(s, n).unwrap())
                .collect(),
        )
    }

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_NAMES {
            let m = builtin_instance(name).unwrap();
            assert!(m.validate().is_ok(), "{name}");
            assert!(m.is_communicating(), "{name}");
        }
        assert!(matches!(builtin_instance("nope"), Err(Error::UnknownInstance(_))));
    }

    #[test]
    fn isolate_zero_is_identity() {
        let fig = builtin_instance("fig-shatter").unwrap();
        let p = policy(&fig, &["goA", "stay"]);
        assert_eq!(isolate_bellman(&fig, &p, 0.0, false).unwrap(), fig);
    }

    #[test]
    fn isolate_raw_rewards() {
        let fig = builtin_instance("fig-shatter").unwrap();
        let p = policy(&fig, &["goA", "stay"]);
        let iso = isolate_bellman(&fig, &p, 0.01, true).unwrap();
        let r = |s: usize, n: &str| iso.reward(s, iso.action_index(s, n).unwrap());
        assert!((r(0, "goB") - 2.99).abs() < 1e-12);
        assert!((r(1, "back") + 0.01).abs() < 1e-12);
        assert!((r(0, "stay") - 1.99).abs() < 1e-12);
        assert_eq!(r(0, "goA"), 3.0);
        assert_eq!(r(1, "stay"), 2.0);
        assert!(mdp_distance(&fig, &iso).unwrap() <= 0.02 + 1e-15);
    }

    #[test]
    fn affine_map_examples() {
        let fig = builtin_instance("fig-shatter").unwrap();
        let unit = affine_reward_map(&fig, 0.0, 1.0).unwrap();
        let mut rewards: Vec<f64> = unit.pairs().map(|(s, a)| unit.reward(s, a)).collect();
        rewards.sort_by(f64::total_cmp);
        rewards.dedup();
        assert_eq!(rewards.len(), 3);
        assert!(rewards[0].abs() < 1e-15);
        assert!((rewards[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((rewards[2] - 1.0).abs() < 1e-15);
        // Already spanning [0, 1]: identity.
        assert_eq!(affine_reward_map(&unit, 0.0, 1.0).unwrap(), unit);
        assert!(affine_reward_map(&fig, 1.0, 1.0).is_err());
    }

    #[test]
    fn shatter_keeps_policy_gain_and_rows_positive() {
        let fig = builtin_instance("fig-shatter").unwrap();
        let p = policy(&fig, &["goA", "stay"]);
        let iso = isolate_bellman(&fig, &p, 0.01, false).unwrap();
        let shattered = ergodic_shatter(&iso, &p, 0.001).unwrap();
        assert!(shattered.pairs().all(|(s, a)| shattered.kernel(s, a).iter().all(|&x| x > 0.0)));
        let before = eval::evaluate(&iso, &p, 0).unwrap();
        let after = eval::evaluate(&shattered, &p, 0).unwrap();
        assert!((before.gain() - after.gain()).amax() < 1e-7);
        let c = shatter_distance_constant(&iso, &p).unwrap();
        assert!(mdp_distance(&iso, &shattered).unwrap() <= c * 0.001 + 1e-12);
    }

    #[test]
    fn random_generator_is_seeded() {
        let cfg = GeneratorConfig {
            state_count: 4,
            min_actions: 2,
            max_actions: 3,
            kernel_sparsity: 0.4,
            seed: 17,
        };
        let a = random_communicating(&cfg).unwrap();
        let b = random_communicating(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.is_communicating());
        let c = random_communicating(&GeneratorConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_sparsity_gives_positive_rows() {
        let m = random_communicating(&GeneratorConfig::new(3, 2, 1.0, 5)).unwrap();
        assert!(m.pairs().all(|(s, a)| m.kernel(s, a).iter().all(|&x| x > 0.0)));
    }
}
