//! Tabular MDP representation: states, per-state action lists, transition
//! rows and mean rewards, plus the reward law used when simulating.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input rows must sum to one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Reward law of a pair. Only the simulator looks at it; the solvers use the
/// mean alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardDist {
    Point,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub name: String,
    /// Dense probability row over next states.
    pub kernel: Vec<f64>,
    pub mean: f64,
    pub dist: RewardDist,
}

impl Action {
    pub fn new(name: impl Into<String>, kernel: Vec<f64>, mean: f64, dist: RewardDist) -> Self {
        Self {
            name: name.into(),
            kernel,
            mean,
            dist,
        }
    }

    /// Point-reward action moving deterministically to `next`.
    pub fn deterministic(name: impl Into<String>, states: usize, next: usize, mean: f64) -> Self {
        let mut kernel = vec![0.0; states];
        kernel[next] = 1.0;
        Self::new(name, kernel, mean, RewardDist::Point)
    }
}

/// A finite MDP. Values are validated on construction and immutable
/// afterwards; transforms return new models.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    states: Vec<String>,
    actions: Vec<Vec<Action>>,
}

impl MdpModel {
    pub fn new(states: Vec<String>, actions: Vec<Vec<Action>>) -> Result<Self> {
        let model = Self { states, actions };
        model.validate()?;
        Ok(model)
    }

    /// Builds a model with states named `s1, s2, ...`.
    pub fn with_default_names(actions: Vec<Vec<Action>>) -> Result<Self> {
        let states = (1..=actions.len()).map(|i| format!("s{i}")).collect();
        Self::new(states, actions)
    }

    /// Checks every structural invariant: nonempty action sets, kernel rows
    /// that are probability vectors, bernoulli means in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::Malformed("model has no states".into()));
        }
        if self.actions.len() != n {
            return Err(Error::Malformed(format!(
                "{} states but {} action lists",
                n,
                self.actions.len()
            )));
        }
        for (s, list) in self.actions.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::EmptyActionSet { state: s });
            }
            for (a, action) in list.iter().enumerate() {
                if action.kernel.len() != n {
                    return Err(Error::Malformed(format!(
                        "row of ({s}, {a}) has length {}, expected {n}",
                        action.kernel.len()
                    )));
                }
                if !action.mean.is_finite() {
                    return Err(Error::Malformed(format!("reward of ({s}, {a}) is not finite")));
                }
                for (next, &p) in action.kernel.iter().enumerate() {
                    if p.is_nan() || p < 0.0 {
                        return Err(Error::NegativeProbability {
                            state: s,
                            action: a,
                            next,
                            value: p,
                        });
                    }
                }
                let sum: f64 = action.kernel.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                if action.dist == RewardDist::Bernoulli && !(0.0..=1.0).contains(&action.mean) {
                    return Err(Error::BernoulliRange {
                        state: s,
                        action: a,
                        mean: action.mean,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn action_count(&self, s: usize) -> usize {
        self.actions[s].len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.actions.iter().map(Vec::len).collect()
    }

    pub fn actions(&self, s: usize) -> &[Action] {
        &self.actions[s]
    }

    pub fn action(&self, s: usize, a: usize) -> &Action {
        &self.actions[s][a]
    }

    pub fn action_index(&self, s: usize, name: &str) -> Option<usize> {
        self.actions[s].iter().position(|a| a.name == name)
    }

    pub fn kernel(&self, s: usize, a: usize) -> &[f64] {
        &self.actions[s][a].kernel
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.actions[s][a].mean
    }

    /// Number of state-action pairs.
    pub fn pair_count(&self) -> usize {
        self.actions.iter().map(Vec::len).sum()
    }

    /// All pairs in state-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .flat_map(|(s, list)| (0..list.len()).map(move |a| (s, a)))
    }

    /// Flat index of a pair in [`MdpModel::pairs`] order.
    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        self.actions[..s].iter().map(Vec::len).sum::<usize>() + a
    }

    /// `|Π| = ∏ |A(s)|`, as a float so it cannot overflow.
    pub fn policy_count(&self) -> f64 {
        self.actions.iter().map(|l| l.len() as f64).product()
    }

    pub fn same_structure(&self, other: &MdpModel) -> bool {
        self.states.len() == other.states.len()
            && self
                .actions
                .iter()
                .zip(&other.actions)
                .all(|(x, y)| x.len() == y.len())
    }

    /// Returns a copy with `f(s, a, action)` applied to every action; rows are
    /// renormalized and the result is validated again.
    pub fn map_actions(&self, mut f: impl FnMut(usize, usize, &mut Action)) -> Result<Self> {
        let mut actions = self.actions.clone();
        for (s, list) in actions.iter_mut().enumerate() {
            for (a, action) in list.iter_mut().enumerate() {
                f(s, a, action);
                let sum: f64 = action.kernel.iter().sum();
                if sum > 0.0 && sum != 1.0 {
                    action.kernel.iter_mut().for_each(|p| *p /= sum);
                }
            }
        }
        Self::new(self.states.clone(), actions)
    }

    /// Transition matrix of the chain induced by `policy`.
    pub fn policy_kernel(&self, policy: &Policy) -> DMatrix<f64> {
        let n = self.state_count();
        DMatrix::from_fn(n, n, |s, t| self.kernel(s, policy.action(s))[t])
    }

    /// Reward vector `r^π`.
    pub fn policy_reward(&self, policy: &Policy) -> DVector<f64> {
        DVector::from_fn(self.state_count(), |s, _| self.reward(s, policy.action(s)))
    }

    /// True iff the graph with an edge `s -> s'` whenever some action moves
    /// from `s` to `s'` with positive probability is strongly connected.
    pub fn is_communicating(&self) -> bool {
        let n = self.state_count();
        let mut forward = vec![Vec::new(); n];
        let mut backward = vec![Vec::new(); n];
        for (s, list) in self.actions.iter().enumerate() {
            for (t, back) in backward.iter_mut().enumerate() {
                if list.iter().any(|a| a.kernel[t] > 0.0) {
                    forward[s].push(t);
                    back.push(s);
                }
            }
        }
        reaches_all(&forward, 0) && reaches_all(&backward, 0)
    }

    /// `p'(·|s,a) = ½ p(·|s,a) + ½ δ_s`, `r' = r / 2`.
    pub fn aperiodic_transform(&self) -> Self {
        let mut actions = self.actions.clone();
        for (s, list) in actions.iter_mut().enumerate() {
            for action in list.iter_mut() {
                for (t, p) in action.kernel.iter_mut().enumerate() {
                    *p = 0.5 * *p + if t == s { 0.5 } else { 0.0 };
                }
                action.mean *= 0.5;
            }
        }
        Self {
            states: self.states.clone(),
            actions,
        }
    }

    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.len() != self.state_count() {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} states, model has {}",
                policy.len(),
                self.state_count()
            )));
        }
        for (s, &a) in policy.choices().iter().enumerate() {
            if a >= self.action_count(s) {
                return Err(Error::InvalidPolicy(format!(
                    "action {a} out of range at state {s}"
                )));
            }
        }
        Ok(())
    }

    /// Iterates over every deterministic policy in lexicographic order.
    pub fn policies(&self) -> PolicyIter {
        PolicyIter::new(self.actions.iter().map(|l| (0..l.len()).collect()).collect())
    }

    /// Renders a policy with action names, e.g. `(goA, stay)`.
    pub fn policy_label(&self, policy: &Policy) -> String {
        let names: Vec<&str> = policy
            .choices()
            .iter()
            .enumerate()
            .map(|(s, &a)| self.actions[s][a].name.as_str())
            .collect();
        format!("({})", names.join(", "))
    }
}

fn reaches_all(adj: &[Vec<usize>], start: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for &t in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen.into_iter().all(|x| x)
}

/// `max( max_z |r(z) - r'(z)|, max_z ‖p(z) - p'(z)‖₁ )`.
pub fn mdp_distance(a: &MdpModel, b: &MdpModel) -> Result<f64> {
    if !a.same_structure(b) {
        return Err(Error::StructureMismatch);
    }
    let mut dist: f64 = 0.0;
    for (s, a_idx) in a.pairs() {
        let x = a.action(s, a_idx);
        let y = b.action(s, a_idx);
        dist = dist.max((x.mean - y.mean).abs());
        let l1: f64 = x.kernel.iter().zip(&y.kernel).map(|(p, q)| (p - q).abs()).sum();
        dist = dist.max(l1);
    }
    Ok(dist)
}

/// True iff every transition possible in `sub` is also possible in `sup`.
pub fn support_covers(sup: &MdpModel, sub: &MdpModel) -> Result<bool> {
    if !sup.same_structure(sub) {
        return Err(Error::StructureMismatch);
    }
    Ok(sup.pairs().all(|(s, a)| {
        sup.kernel(s, a)
            .iter()
            .zip(sub.kernel(s, a))
            .all(|(&p, &q)| q <= 0.0 || p > 0.0)
    }))
}

/// A deterministic stationary policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(choices: Vec<usize>) -> Self {
        Self(choices)
    }

    /// The policy playing action 0 everywhere.
    pub fn first_actions(states: usize) -> Self {
        Self(vec![0; states])
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn set(&mut self, s: usize, a: usize) {
        self.0[s] = a;
    }

    pub fn choices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Per-state nonempty subsets of allowed action indices, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask(Vec<Vec<usize>>);

impl ActionMask {
    pub fn new(mut allowed: Vec<Vec<usize>>) -> Result<Self> {
        for (s, list) in allowed.iter_mut().enumerate() {
            if list.is_empty() {
                return Err(Error::EmptyActionSet { state: s });
            }
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self(allowed))
    }

    /// Every action allowed.
    pub fn full(model: &MdpModel) -> Self {
        Self(
            (0..model.state_count())
                .map(|s| (0..model.action_count(s)).collect())
                .collect(),
        )
    }

    pub fn allowed(&self, s: usize) -> &[usize] {
        &self.0[s]
    }

    pub fn states(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, policy: &Policy) -> bool {
        policy
            .choices()
            .iter()
            .enumerate()
            .all(|(s, a)| self.0[s].binary_search(a).is_ok())
    }

    /// `A ⊆ B` statewise.
    pub fn is_subset_of(&self, other: &ActionMask) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(x, y)| x.iter().all(|a| y.binary_search(a).is_ok()))
    }

    /// Enumerates `Π(A)`, the policies playing only allowed actions.
    pub fn policies(&self) -> PolicyIter {
        PolicyIter::new(self.0.clone())
    }

    pub fn policy_count(&self) -> f64 {
        self.0.iter().map(|l| l.len() as f64).product()
    }
}

/// Mixed-radix enumeration over per-state candidate lists; the last state
/// varies fastest.
#[derive(Debug, Clone)]
pub struct PolicyIter {
    options: Vec<Vec<usize>>,
    cursor: Option<Vec<usize>>,
}

impl PolicyIter {
    fn new(options: Vec<Vec<usize>>) -> Self {
        let cursor = if options.iter().all(|o| !o.is_empty()) {
            Some(vec![0; options.len()])
        } else {
            None
        };
        Self { options, cursor }
    }
}

impl Iterator for PolicyIter {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        let cursor = self.cursor.as_mut()?;
        let policy = Policy(
            cursor
                .iter()
                .zip(&self.options)
                .map(|(&i, o)| o[i])
                .collect(),
        );
        let mut s = cursor.len();
        loop {
            if s == 0 {
                self.cursor = None;
                break;
            }
            s -= 1;
            cursor[s] += 1;
            if cursor[s] < self.options[s].len() {
                break;
            }
            cursor[s] = 0;
        }
        Some(policy)
    }
}
