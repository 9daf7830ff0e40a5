//! Simulation of a hidden model and the learning loop: uniform exploration,
//! an empirical model, HOPI with a shrinking slack, and the stopping rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certificates::{beta_threshold_with, xi_confidence, GapTolerance, XiVariant};
use crate::error::{Error, Result};
use crate::hopi::hopi_run;
use crate::model::{Action, MdpModel, Policy, RewardDist};
use crate::oracle::OptimalSets;

/// Draws a reward and a next state from pair `(s, a)`.
pub fn sim_step<R: Rng + ?Sized>(model: &MdpModel, s: usize, a: usize, rng: &mut R) -> (f64, usize) {
    let action = model.action(s, a);
    let reward = match action.dist {
        RewardDist::Point => action.mean,
        RewardDist::Bernoulli => {
            if rng.random::<f64>() < action.mean {
                1.0
            } else {
                0.0
            }
        }
    };
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut next = None;
    for (t, &p) in action.kernel.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            next = Some(t);
            if u < acc {
                break;
            }
        }
    }
    (reward, next.expect("validated rows have positive mass"))
}

/// Visit, transition and reward counters, indexed by flat pair index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStats {
    pub t: u64,
    pub visits: Vec<u64>,
    pub transitions: Vec<Vec<u64>>,
    pub reward_sums: Vec<f64>,
}

impl EmpiricalStats {
    pub fn new(model: &MdpModel) -> Self {
        let z = model.pair_count();
        Self {
            t: 0,
            visits: vec![0; z],
            transitions: vec![vec![0; model.state_count()]; z],
            reward_sums: vec![0.0; z],
        }
    }

    pub fn record(&mut self, pair: usize, reward: f64, next: usize) {
        self.t += 1;
        self.visits[pair] += 1;
        self.transitions[pair][next] += 1;
        self.reward_sums[pair] += reward;
    }

    pub fn min_visits(&self) -> u64 {
        self.visits.iter().copied().min().unwrap_or(0)
    }
}

/// Reward assumed for pairs never visited; their row is uniform.
pub const UNVISITED_REWARD: f64 = 0.5;

/// Empirical model on the structure of `template`: visited pairs get the
/// observed frequencies and mean reward, the others a uniform row and
/// `unvisited_reward`. Rewards are point laws.
pub fn empirical_model(template: &MdpModel, stats: &EmpiricalStats, unvisited_reward: f64) -> Result<MdpModel> {
    let n = template.state_count();
    let actions = (0..n)
        .map(|s| {
            (0..template.action_count(s))
                .map(|a| {
                    let z = template.pair_index(s, a);
                    let visits = stats.visits[z];
                    let (kernel, mean) = if visits == 0 {
                        (vec![1.0 / n as f64; n], unvisited_reward)
                    } else {
                        let v = visits as f64;
                        (
                            stats.transitions[z].iter().map(|&c| c as f64 / v).collect(),
                            stats.reward_sums[z] / v,
                        )
                    };
                    Action::new(template.action(s, a).name.clone(), kernel, mean, RewardDist::Point)
                })
                .collect()
        })
        .collect();
    MdpModel::new(template.state_names().to_vec(), actions)
}

/// When the loop rebuilds the empirical model and runs HOPI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Every step.
    #[default]
    Every,
    /// Every step below 64, then at powers of two.
    Doubling,
}

impl Schedule {
    pub fn is_checkpoint(self, t: u64) -> bool {
        match self {
            Self::Every => true,
            Self::Doubling => t < 64 || t.is_power_of_two(),
        }
    }
}

/// Parameters of [`hope_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Target optimality order `n ≥ -1`.
    pub order: i32,
    pub delta: f64,
    /// Number of samples at most.
    pub horizon: u64,
    pub seed: u64,
    /// Slack schedule `ε_t = max(1, t)^{-exponent}`, exponent in `(0, ½)`.
    pub exponent: f64,
    pub schedule: Schedule,
    pub xi_variant: XiVariant,
    pub unvisited_reward: f64,
    pub initial_state: usize,
    /// Additional checkpoint times.
    pub extra_checkpoints: Vec<u64>,
    /// Stop sampling at the stopping time; otherwise run to the horizon.
    pub stop_at_tau: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            order: 0,
            delta: 0.1,
            horizon: 10_000,
            seed: 0,
            exponent: 0.25,
            schedule: Schedule::Every,
            xi_variant: XiVariant::Main,
            unvisited_reward: UNVISITED_REWARD,
            initial_state: 0,
            extra_checkpoints: Vec::new(),
            stop_at_tau: true,
        }
    }
}

impl RunConfig {
    fn check(&self, model: &MdpModel) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.exponent > 0.0 && self.exponent < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "slack exponent must lie in (0, 1/2), got {}",
                self.exponent
            )));
        }
        if self.order < -1 {
            return Err(Error::OrderOutOfRange { order: self.order, max: i32::MAX });
        }
        if self.initial_state >= model.state_count() {
            return Err(Error::InvalidConfig(format!("no state {}", self.initial_state)));
        }
        Ok(())
    }

    pub fn slack(&self, t: u64) -> f64 {
        (t.max(1) as f64).powf(-self.exponent)
    }
}

/// State of the loop at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: u64,
    pub recommended: Policy,
    pub epsilon: f64,
    pub min_visits: u64,
    pub xi: f64,
    pub beta: f64,
    /// Whether the certificate's policy is unique and equals the recommendation.
    pub certified: bool,
    pub stopped: bool,
    /// Membership of the recommendation in `Π*_n`, when a reference is given.
    pub correct: Option<bool>,
}

/// Log of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    /// First checkpoint where the stopping rule fired.
    pub tau: Option<u64>,
    pub steps: u64,
    /// Visit counts at the end of the run, by flat pair index.
    pub visits: Vec<u64>,
}

impl RunRecord {
    pub fn stopping_checkpoint(&self) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.stopped)
    }

    /// The last checkpoint at or before `t`.
    pub fn at(&self, t: u64) -> Option<&Checkpoint> {
        self.checkpoints.iter().take_while(|c| c.t <= t).last()
    }
}

/// Runs the learning loop on the hidden `model`.
///
/// At each checkpoint `t ≥ 1` the empirical model is rebuilt, HOPI(n, ε_t)
/// recommends the final policy of its trace, and the rule stops once
/// `ξ_δ(t) ≤ β(M̂_t)` with a unique certified policy equal to the
/// recommendation. Between checkpoints, actions are sampled uniformly.
pub fn hope_run(model: &MdpModel, config: &RunConfig, reference: Option<&OptimalSets>) -> Result<RunRecord> {
    config.check(model)?;
    if !model.is_communicating() {
        return Err(Error::NotCommunicating);
    }
    for (s, a) in model.pairs() {
        let mean = model.reward(s, a);
        if !(0.0..=1.0).contains(&mean) {
            return Err(Error::RewardRange { state: s, action: a, mean });
        }
    }
    if let Some(r) = reference {
        if r.max_order() < config.order {
            return Err(Error::OrderOutOfRange { order: config.order, max: r.max_order() });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = EmpiricalStats::new(model);
    let mut state = config.initial_state;
    let mut recommended = Policy::first_actions(model.state_count());
    let mut checkpoints = Vec::new();
    let mut tau = None;
    let states = model.state_count();
    let pairs = model.pair_count();

    loop {
        let t = stats.t;
        let is_checkpoint =
            t >= 1 && (config.schedule.is_checkpoint(t) || t == config.horizon || config.extra_checkpoints.contains(&t));
        if is_checkpoint {
            let estimate = empirical_model(model, &stats, config.unvisited_reward)?;
            let epsilon = config.slack(t);
            // An estimate that is not yet communicating keeps the previous
            // recommendation.
            if let Ok(trace) = hopi_run(&estimate, config.order, epsilon) {
                recommended = trace.final_policy;
            }
            let min_visits = stats.min_visits();
            let xi = xi_confidence(t, min_visits, states, pairs, config.delta, config.xi_variant);
            let (beta, certified) = match beta_threshold_with(&estimate, GapTolerance::Relative) {
                Ok(c) => (c.beta, c.policy.as_ref() == Some(&recommended)),
                Err(_) => (f64::INFINITY, false),
            };
            let stopped = tau.is_none() && certified && xi <= beta;
            if stopped {
                tau = Some(t);
            }
            let correct = match reference {
                Some(r) => Some(r.contains(config.order, &recommended)?),
                None => None,
            };
            checkpoints.push(Checkpoint {
                t,
                recommended: recommended.clone(),
                epsilon,
                min_visits,
                xi,
                beta,
                certified,
                stopped,
                correct,
            });
            if stopped && config.stop_at_tau {
                break;
            }
        }
        if t >= config.horizon {
            break;
        }
        let action = rng.random_range(0..model.action_count(state));
        let (reward, next) = sim_step(model, state, action, &mut rng);
        stats.record(model.pair_index(state, action), reward, next);
        state = next;
    }

    Ok(RunRecord {
        seed: config.seed,
        checkpoints,
        tau,
        steps: stats.t,
        visits: stats.visits,
    })
}
