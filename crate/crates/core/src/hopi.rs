//! Higher order policy iteration.
//!
//! An initial loop reaches a constant-gain policy that satisfies the order 0
//! Bellman equations. Then, for each order `m = -1, ..., n`, a two-stage
//! improvement loop refines the action mask `A_m`: the first stage keeps the
//! actions of `A_{m-1}` that are soft optimal for the order `m + 1` lookahead,
//! the second stage checks the current policy against the order `m + 2`
//! lookahead inside that set. Every improvement changes a single state: the
//! first violating state, moved to the lowest-index soft optimal action.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{self, lookahead, span, PolicyEvaluation};
use crate::model::{ActionMask, MdpModel, Policy};

/// Absolute slack of every equality or membership comparison.
pub const TAU_EQ: f64 = 1e-9;

/// Keys whose value is within `epsilon` (plus [`TAU_EQ`]) of the maximum, in
/// input order. Empty input gives an empty set.
pub fn soft_argmax<K: Copy>(values: &[(K, f64)], epsilon: f64) -> Vec<K> {
    let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .filter(|v| v.1 >= max - epsilon - TAU_EQ)
        .map(|v| v.0)
        .collect()
}

/// A policy with constant gain equal to the best gain of `policy`.
///
/// The policy is kept on a recurrent class of maximal gain. Every other state
/// is assigned by breadth-first layers toward that class: a state of layer
/// `L + 1` plays its lowest-index action with positive probability of
/// reaching layers `0..=L`.
pub fn constant_gain_lift(model: &MdpModel, policy: &Policy, eval: &PolicyEvaluation) -> Result<Policy> {
    let gain = eval.gain();
    let best = eval
        .chain
        .recurrent_classes
        .iter()
        .fold(None::<&Vec<usize>>, |best, class| match best {
            Some(b) if gain[b[0]] >= gain[class[0]] - TAU_EQ => Some(b),
            _ => Some(class),
        })
        .ok_or(Error::NotCommunicating)?;

    let n = model.state_count();
    let mut layered = vec![false; n];
    let mut lifted = policy.clone();
    for &s in best {
        layered[s] = true;
    }
    let mut pending: Vec<usize> = (0..n).filter(|&s| !layered[s]).collect();
    while !pending.is_empty() {
        let assigned: Vec<(usize, usize)> = pending
            .iter()
            .filter_map(|&s| {
                (0..model.action_count(s))
                    .find(|&a| {
                        model
                            .kernel(s, a)
                            .iter()
                            .enumerate()
                            .any(|(t, &p)| p > 0.0 && layered[t])
                    })
                    .map(|a| (s, a))
            })
            .collect();
        if assigned.is_empty() {
            return Err(Error::NotCommunicating);
        }
        for &(s, a) in &assigned {
            layered[s] = true;
            lifted.set(s, a);
        }
        pending.retain(|&s| !layered[s]);
    }
    Ok(lifted)
}

/// What caused a step of the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Jump to a constant-gain policy.
    Lift,
    /// Order 0 improvement of the initial loop.
    Initial,
    /// First-stage improvement of a phase.
    First,
    /// Second-stage improvement of a phase.
    Second,
    /// A phase settled its mask; the policy is unchanged.
    Settle,
}

/// One record of the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopiStep {
    /// Index of the policy after this step, starting at 1.
    pub k: usize,
    /// Phase `m`; the initial loop is phase `-2`.
    pub phase: i32,
    pub stage: Stage,
    /// Changed state, for single-state improvements.
    pub state: Option<usize>,
    /// New action at `state`.
    pub action: Option<usize>,
}

/// Full record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct HopiTrace {
    pub order: i32,
    pub epsilon: f64,
    /// `π_1, π_2, ...`.
    pub policies: Vec<Policy>,
    pub steps: Vec<HopiStep>,
    /// `k_m` for `m = -2, ..., n`.
    pub phase_starts: BTreeMap<i32, usize>,
    /// `A_m` for `m = -2, ..., n`.
    pub masks: BTreeMap<i32, ActionMask>,
    pub final_policy: Policy,
}

impl HopiTrace {
    /// Number of policy changes.
    pub fn iterations(&self) -> usize {
        self.policies.len() - 1
    }

    /// The output mask `A_n`.
    pub fn final_mask(&self) -> &ActionMask {
        &self.masks[&self.order]
    }

    /// One JSON object per step, state and action given by name.
    pub fn to_jsonl(&self, model: &MdpModel) -> String {
        let mut out = String::new();
        for step in &self.steps {
            let record = serde_json::json!({
                "k": step.k,
                "phase": step.phase,
                "stage": step.stage,
                "state": step.state.map(|s| model.state_names()[s].clone()),
                "action": step.state.zip(step.action).map(|(s, a)| model.action(s, a).name.clone()),
            });
            out.push_str(&record.to_string());
            out.push('\n');
        }
        out
    }
}

/// Run options beyond the order and the slack.
#[derive(Debug, Clone, Default)]
pub struct HopiOptions {
    /// Maximum number of policy changes; defaults to `10 |Π|`.
    pub iteration_cap: Option<usize>,
}

/// Runs HOPI(`n`, `epsilon`) from the lowest-index policy.
pub fn hopi_run(model: &MdpModel, n: i32, epsilon: f64) -> Result<HopiTrace> {
    hopi_run_with(model, n, epsilon, &HopiOptions::default())
}

pub fn hopi_run_with(model: &MdpModel, n: i32, epsilon: f64, options: &HopiOptions) -> Result<HopiTrace> {
    if n < -1 {
        return Err(Error::OrderOutOfRange { order: n, max: i32::MAX });
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::InvalidConfig(format!("negative slack {epsilon}")));
    }
    if !model.is_communicating() {
        return Err(Error::NotCommunicating);
    }
    let cap = options
        .iteration_cap
        .unwrap_or_else(|| (10.0 * model.policy_count()).min(usize::MAX as f64) as usize);
    let mut run = Runner {
        model,
        epsilon,
        cap,
        policies: vec![Policy::first_actions(model.state_count())],
        steps: Vec::new(),
        eval: None,
    };
    let mut phase_starts = BTreeMap::new();
    let mut masks = BTreeMap::new();

    let full = ActionMask::full(model);
    loop {
        let current = run.current().clone();
        let eval = run.evaluation(0)?;
        if span(eval.gain()) > TAU_EQ {
            let lifted = constant_gain_lift(model, &current, eval)?;
            run.change(lifted, -2, Stage::Lift, None)?;
            continue;
        }
        let h = eval.bias(0)?.clone();
        if let Some((s, a)) = run.violation(&full, 0, &h) {
            run.change_one(s, a, -2, Stage::Initial)?;
            continue;
        }
        phase_starts.insert(-2, run.policies.len());
        masks.insert(-2, full.clone());
        run.settle(-2);
        break;
    }

    let mut previous = full;
    for m in -1..=n {
        loop {
            let eval = run.evaluation(m + 2)?;
            let h1 = eval.bias(m + 1)?.clone();
            let h2 = eval.bias(m + 2)?.clone();
            if let Some((s, a)) = run.violation(&previous, m + 1, &h1) {
                run.change_one(s, a, m, Stage::First)?;
                continue;
            }
            let candidate = run.soft_mask(&previous, m + 1, &h1)?;
            if let Some((s, a)) = run.violation(&candidate, m + 2, &h2) {
                run.change_one(s, a, m, Stage::Second)?;
                continue;
            }
            phase_starts.insert(m, run.policies.len());
            masks.insert(m, candidate.clone());
            run.settle(m);
            previous = candidate;
            break;
        }
    }

    let final_policy = run.current().clone();
    Ok(HopiTrace {
        order: n,
        epsilon,
        policies: run.policies,
        steps: run.steps,
        phase_starts,
        masks,
        final_policy,
    })
}

struct Runner<'a> {
    model: &'a MdpModel,
    epsilon: f64,
    cap: usize,
    policies: Vec<Policy>,
    steps: Vec<HopiStep>,
    /// Evaluation of the current policy, extended on demand.
    eval: Option<PolicyEvaluation>,
}

impl Runner<'_> {
    fn current(&self) -> &Policy {
        self.policies.last().expect("at least the initial policy")
    }

    fn evaluation(&mut self, order: i32) -> Result<&PolicyEvaluation> {
        match &mut self.eval {
            Some(e) => e.extend_to(order),
            None => {
                let current = self.current().clone();
                self.eval = Some(eval::evaluate(self.model, &current, order)?);
            }
        }
        Ok(self.eval.as_ref().expect("just filled"))
    }

    fn soft_set(&self, mask: &ActionMask, order: i32, h: &nalgebra::DVector<f64>, s: usize) -> Vec<usize> {
        let values: Vec<(usize, f64)> = mask
            .allowed(s)
            .iter()
            .map(|&a| (a, lookahead(self.model, order, h, s, a)))
            .collect();
        soft_argmax(&values, self.epsilon)
    }

    fn soft_mask(&self, mask: &ActionMask, order: i32, h: &nalgebra::DVector<f64>) -> Result<ActionMask> {
        ActionMask::new(
            (0..self.model.state_count())
                .map(|s| self.soft_set(mask, order, h, s))
                .collect(),
        )
    }

    /// First state whose current action is outside the soft argmax, with the
    /// lowest-index action of that soft argmax.
    fn violation(&self, mask: &ActionMask, order: i32, h: &nalgebra::DVector<f64>) -> Option<(usize, usize)> {
        let policy = self.current();
        (0..self.model.state_count()).find_map(|s| {
            let soft = self.soft_set(mask, order, h, s);
            (!soft.contains(&policy.action(s))).then(|| (s, soft[0]))
        })
    }

    fn change_one(&mut self, s: usize, a: usize, phase: i32, stage: Stage) -> Result<()> {
        let mut next = self.current().clone();
        next.set(s, a);
        self.change(next, phase, stage, Some((s, a)))
    }

    fn change(&mut self, next: Policy, phase: i32, stage: Stage, pair: Option<(usize, usize)>) -> Result<()> {
        if self.policies.len() > self.cap {
            return Err(Error::IterationCapExceeded {
                cap: self.cap,
                last_policy: self.current().clone(),
            });
        }
        self.policies.push(next);
        self.eval = None;
        self.steps.push(HopiStep {
            k: self.policies.len(),
            phase,
            stage,
            state: pair.map(|p| p.0),
            action: pair.map(|p| p.1),
        });
        Ok(())
    }

    fn settle(&mut self, phase: i32) {
        self.steps.push(HopiStep {
            k: self.policies.len(),
            phase,
            stage: Stage::Settle,
            state: None,
            action: None,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Action, RewardDist};
    use crate::transforms::{builtin_instance, isolate_bellman};

    #[test]
    fn soft_argmax_examples() {
        let v = [('a', 1.0), ('b', 0.95), ('c', 0.5)];
        assert_eq!(soft_argmax(&v, 0.1), vec!['a', 'b']);
        assert_eq!(soft_argmax(&v, 0.0), vec!['a']);
        assert_eq!(soft_argmax(&[('a', 1.0), ('b', 1.0)], 0.0), vec!['a', 'b']);
    }

    #[test]
    fn single_state_is_trivial() {
        let m = builtin_instance("single").unwrap();
        for n in -1..=2 {
            let t = hopi_run(&m, n, 0.0).unwrap();
            assert_eq!(t.iterations(), 0);
            assert_eq!(t.final_mask().allowed(0), &[0]);
            assert_eq!(t.masks.len() as i32, n + 3);
        }
    }

    #[test]
    fn fig_order_zero() {
        let m = builtin_instance("fig-shatter").unwrap();
        let t = hopi_run(&m, 0, 0.0).unwrap();
        let a0 = t.final_mask();
        let names = |s: usize| -> Vec<&str> { a0.allowed(s).iter().map(|&a| m.action(s, a).name.as_str()).collect() };
        assert_eq!(names(0), vec!["goA", "goB"]);
        assert_eq!(names(1), vec!["stay"]);
        assert!(a0.contains(&t.final_policy));
    }

    #[test]
    fn fig_isolated_singleton() {
        let m = builtin_instance("fig-shatter").unwrap();
        let target = Policy::new(vec![m.action_index(0, "goA").unwrap(), 0]);
        let iso = isolate_bellman(&m, &target, 0.01, false).unwrap();
        let t = hopi_run(&iso, 0, 0.0).unwrap();
        assert_eq!(t.final_mask().policies().collect::<Vec<_>>(), vec![target]);
    }

    #[test]
    fn masks_are_nested() {
        let m = builtin_instance("fig-shatter").unwrap();
        let t = hopi_run(&m, 2, 0.0).unwrap();
        for order in -1..=2 {
            assert!(t.masks[&order].is_subset_of(&t.masks[&(order - 1)]));
        }
    }

    #[test]
    fn lift_reaches_best_class() {
        // s1 loops with reward 2, s2 loops with reward 1 or moves to s1.
        let m = MdpModel::with_default_names(vec![
            vec![Action::deterministic("stay", 2, 0, 2.0)],
            vec![
                Action::deterministic("stay", 2, 1, 1.0),
                Action::new("go", vec![1.0, 0.0], 0.0, RewardDist::Point),
            ],
        ])
        .unwrap();
        let p = Policy::first_actions(2);
        let e = eval::evaluate(&m, &p, 0).unwrap();
        assert!((e.gain()[0] - 2.0).abs() < 1e-12 && (e.gain()[1] - 1.0).abs() < 1e-12);
        let lifted = constant_gain_lift(&m, &p, &e).unwrap();
        assert_eq!(lifted, Policy::new(vec![0, 1]));
        let g = eval::evaluate(&m, &lifted, -1).unwrap();
        assert!(span(g.gain()) < 1e-9 && (g.gain()[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cap_reports_last_policy() {
        let m = MdpModel::with_default_names(vec![
            vec![
                Action::deterministic("stay", 2, 0, 0.0),
                Action::deterministic("go", 2, 1, 0.0),
            ],
            vec![
                Action::deterministic("stay", 2, 1, 1.0),
                Action::new("go", vec![1.0, 0.0], 0.0, RewardDist::Point),
            ],
        ])
        .unwrap();
        let err = hopi_run_with(&m, 0, 0.0, &HopiOptions { iteration_cap: Some(0) }).unwrap_err();
        assert!(matches!(err, Error::IterationCapExceeded { cap: 0, .. }));
    }

    #[test]
    fn rejects_non_communicating() {
        let m = MdpModel::with_default_names(vec![
            vec![Action::deterministic("stay", 2, 0, 0.0)],
            vec![Action::deterministic("stay", 2, 1, 0.0)],
        ])
        .unwrap();
        assert!(matches!(hopi_run(&m, 0, 0.0), Err(Error::NotCommunicating)));
    }

    #[test]
    fn jsonl_has_one_line_per_step() {
        let m = builtin_instance("fig-shatter").unwrap();
        let t = hopi_run(&m, 1, 0.0).unwrap();
        let text = t.to_jsonl(&m);
        assert_eq!(text.lines().count(), t.steps.len());
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("stage").is_some());
        }
    }
}
