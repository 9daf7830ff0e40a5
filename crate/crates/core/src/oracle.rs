//! Brute-force ground truth over all deterministic policies.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{self, gap_table, POLICY_CAP};
use crate::model::{MdpModel, Policy};

/// Default membership tolerance of the optimal sets.
pub const ORACLE_TOL: f64 = 1e-7;

/// `Π*_m` and `h*_m` at one order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalLevel {
    pub order: i32,
    /// Sorted in lexicographic policy order.
    pub policies: Vec<Policy>,
    /// Componentwise max of `h_m` over `Π*_{m-1}`.
    pub best: DVector<f64>,
}

/// The nested sets `Π*_{-1} ⊇ Π*_0 ⊇ ... ⊇ Π*_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSets {
    /// `Π*_{-2}`: every policy.
    pub all: Vec<Policy>,
    /// Levels `-1..=n`, in order.
    pub levels: Vec<OptimalLevel>,
}

impl OptimalSets {
    pub fn max_order(&self) -> i32 {
        self.levels.len() as i32 - 2
    }

    /// `Π*_m` for `m ∈ {-2, ..., max_order}`.
    pub fn set(&self, order: i32) -> Result<&[Policy]> {
        if order == -2 {
            return Ok(&self.all);
        }
        if order < -2 || order > self.max_order() {
            return Err(Error::OrderOutOfRange {
                order,
                max: self.max_order(),
            });
        }
        Ok(&self.levels[(order + 1) as usize].policies)
    }

    pub fn contains(&self, order: i32, policy: &Policy) -> Result<bool> {
        Ok(self.set(order)?.binary_search(policy).is_ok())
    }
}

/// Evaluates every policy and keeps, order by order, those whose bias is
/// within `tol` of the componentwise best among the survivors.
pub fn optimal_policy_sets(model: &MdpModel, n: i32, tol: f64) -> Result<OptimalSets> {
    optimal_policy_sets_capped(model, n, tol, POLICY_CAP)
}

pub fn optimal_policy_sets_capped(model: &MdpModel, n: i32, tol: f64, cap: usize) -> Result<OptimalSets> {
    let count = model.policy_count();
    if count > cap as f64 {
        return Err(Error::TooManyPolicies { count, cap });
    }
    let all: Vec<Policy> = model.policies().collect();
    let biases: Vec<Vec<DVector<f64>>> = all
        .par_iter()
        .map(|p| {
            let e = eval::evaluate(model, p, n)?;
            (-1..=n).map(|m| e.bias(m).cloned()).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut survivors: Vec<usize> = (0..all.len()).collect();
    let mut levels = Vec::with_capacity((n + 2).max(0) as usize);
    for (i, order) in (-1..=n).enumerate() {
        let states = model.state_count();
        let best = DVector::from_fn(states, |s, _| {
            survivors
                .iter()
                .map(|&p| biases[p][i][s])
                .fold(f64::NEG_INFINITY, f64::max)
        });
        survivors.retain(|&p| biases[p][i].iter().zip(best.iter()).all(|(v, b)| *v >= b - tol));
        levels.push(OptimalLevel {
            order,
            policies: survivors.iter().map(|&p| all[p].clone()).collect(),
            best,
        });
    }
    Ok(OptimalSets { all, levels })
}

/// Whether `policy` satisfies the nested Bellman equations of orders
/// `-1..=n`: wherever all lower-order gaps vanish, the order `m` gap is
/// nonnegative.
pub fn is_n_bellman_optimal(model: &MdpModel, policy: &Policy, n: i32, tol: f64) -> Result<bool> {
    let e = eval::evaluate(model, policy, n.max(-1))?;
    let mut tight: Vec<Vec<bool>> = (0..model.state_count())
        .map(|s| vec![true; model.action_count(s)])
        .collect();
    for m in -1..=n {
        let gaps = gap_table(model, &e, m)?;
        for (s, row) in tight.iter_mut().enumerate() {
            for (a, t) in row.iter_mut().enumerate() {
                let g = gaps.get(s, a);
                if *t && g < -tol {
                    return Ok(false);
                }
                *t = *t && g.abs() <= tol;
            }
        }
    }
    Ok(true)
}

/// Policies satisfying the order `-1` and `0` Bellman equations.
pub fn bellman_optimal_set(model: &MdpModel, tol: f64) -> Result<Vec<Policy>> {
    let count = model.policy_count();
    if count > POLICY_CAP as f64 {
        return Err(Error::TooManyPolicies { count, cap: POLICY_CAP });
    }
    let all: Vec<Policy> = model.policies().collect();
    let keep: Vec<bool> = all
        .par_iter()
        .map(|p| is_n_bellman_optimal(model, p, 0, tol))
        .collect::<Result<_>>()?;
    Ok(all.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{affine_reward_map, builtin_instance, isolate_bellman};

    fn by_names(model: &MdpModel, names: &[&str]) -> Policy {
        Policy::new(
            names
                .iter()
                .enumerate()
                .map(|(s, n)| model.action_index(s, n).unwrap())
                .collect(),
        )
    }

    #[test]
    fn single_state_sets() {
        let m = builtin_instance("single").unwrap();
        let sets = optimal_policy_sets(&m, 2, ORACLE_TOL).unwrap();
        for order in -2..=2 {
            assert_eq!(sets.set(order).unwrap().len(), 1);
        }
        assert_eq!(bellman_optimal_set(&m, ORACLE_TOL).unwrap().len(), 1);
    }

    #[test]
    fn fig_sets() {
        let m = builtin_instance("fig-shatter").unwrap();
        let sets = optimal_policy_sets(&m, 1, ORACLE_TOL).unwrap();
        let mut gain_opt = vec![
            by_names(&m, &["stay", "stay"]),
            by_names(&m, &["stay", "back"]),
            by_names(&m, &["goA", "stay"]),
            by_names(&m, &["goB", "stay"]),
        ];
        gain_opt.sort();
        assert_eq!(sets.set(-1).unwrap(), gain_opt.as_slice());
        let bias_opt = vec![by_names(&m, &["goA", "stay"]), by_names(&m, &["goB", "stay"])];
        assert_eq!(sets.set(0).unwrap(), bias_opt.as_slice());
        assert_eq!(sets.set(1).unwrap(), bias_opt.as_slice());
        // (stay, back) has constant gain 2 and bias (0, -2): every order 0
        // gap is nonnegative, so it is Bellman optimal without being bias
        // optimal.
        let bellman = vec![
            by_names(&m, &["stay", "back"]),
            by_names(&m, &["goA", "stay"]),
            by_names(&m, &["goB", "stay"]),
        ];
        assert_eq!(bellman_optimal_set(&m, ORACLE_TOL).unwrap(), bellman);
    }

    #[test]
    fn fig_bellman_checks() {
        let m = builtin_instance("fig-shatter").unwrap();
        assert!(is_n_bellman_optimal(&m, &by_names(&m, &["goA", "stay"]), 0, ORACLE_TOL).unwrap());
        assert!(!is_n_bellman_optimal(&m, &by_names(&m, &["stay", "stay"]), 0, ORACLE_TOL).unwrap());
    }

    #[test]
    fn isolated_fig_is_unique() {
        let m = builtin_instance("fig-shatter").unwrap();
        let target = by_names(&m, &["goA", "stay"]);
        let iso = isolate_bellman(&m, &target, 0.01, false).unwrap();
        assert_eq!(bellman_optimal_set(&iso, ORACLE_TOL).unwrap(), vec![target]);
    }

    #[test]
    fn affine_map_keeps_sets() {
        let m = builtin_instance("fig-shatter").unwrap();
        let unit = affine_reward_map(&m, 0.0, 1.0).unwrap();
        let a = optimal_policy_sets(&m, 2, ORACLE_TOL).unwrap();
        let b = optimal_policy_sets(&unit, 2, ORACLE_TOL).unwrap();
        for order in -1..=2 {
            assert_eq!(a.set(order).unwrap(), b.set(order).unwrap());
        }
        assert_eq!(
            bellman_optimal_set(&m, ORACLE_TOL).unwrap(),
            bellman_optimal_set(&builtin_instance("fig-shatter-01").unwrap(), ORACLE_TOL).unwrap()
        );
    }

    #[test]
    fn cap_is_enforced() {
        let m = builtin_instance("fig-shatter").unwrap();
        assert!(matches!(
            optimal_policy_sets_capped(&m, 0, ORACLE_TOL, 3),
            Err(Error::TooManyPolicies { .. })
        ));
    }
}
