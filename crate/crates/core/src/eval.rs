//! Exact evaluation of a deterministic policy: stationary projector,
//! deviation matrix, gain and the chain of higher-order biases, plus the gap
//! tables and model-wide constants built on top of them.

use nalgebra::{DMatrix, DVector};

use crate::chain::{self, ChainStructure};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{MdpModel, Policy};

/// Default cap on `∏ |A(s)|` for anything that enumerates policies.
pub const POLICY_CAP: usize = 1_000_000;

/// Everything known about one policy's chain.
///
/// `biases[0]` is the gain `h_{-1}`, `biases[k]` is `h_{k-1}`. The recursion
/// is `g = P* r`, `h_0 = D r`, `h_n = -D h_{n-1}`.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub policy: Policy,
    pub chain: ChainStructure,
    pub kernel: DMatrix<f64>,
    pub reward: DVector<f64>,
    /// Cesàro limit `P*` of the powers of the kernel.
    pub projector: DMatrix<f64>,
    /// `D = (I - P + P*)^{-1} (I - P*)`.
    pub deviation: DMatrix<f64>,
    biases: Vec<DVector<f64>>,
}

impl PolicyEvaluation {
    pub fn gain(&self) -> &DVector<f64> {
        &self.biases[0]
    }

    /// Highest order available (`-1` means the gain only).
    pub fn max_order(&self) -> i32 {
        self.biases.len() as i32 - 2
    }

    /// `h_order`, for `order ∈ {-1, ..., max_order}`.
    pub fn bias(&self, order: i32) -> Result<&DVector<f64>> {
        if order < -1 || order > self.max_order() {
            return Err(Error::OrderOutOfRange {
                order,
                max: self.max_order(),
            });
        }
        Ok(&self.biases[(order + 1) as usize])
    }

    /// Extends the bias chain up to `order`.
    pub fn extend_to(&mut self, order: i32) {
        while self.max_order() < order {
            let last = self.biases.last().expect("gain is always present");
            let next = -(&self.deviation * last);
            self.biases.push(next);
        }
    }
}

/// Evaluates `policy` in `model` up to bias order `max_order ≥ -1`.
pub fn evaluate(model: &MdpModel, policy: &Policy, max_order: i32) -> Result<PolicyEvaluation> {
    model.check_policy(policy)?;
    let kernel = model.policy_kernel(policy);
    let reward = model.policy_reward(policy);
    evaluate_chain(policy.clone(), kernel, reward, max_order)
}

/// Evaluation of the Markov reward process `(kernel, reward)`.
pub fn evaluate_chain(
    policy: Policy,
    kernel: DMatrix<f64>,
    reward: DVector<f64>,
    max_order: i32,
) -> Result<PolicyEvaluation> {
    let n = kernel.nrows();
    let chain = ChainStructure::of_kernel(&kernel);
    let projector = stationary_projector(&kernel, &chain)?;
    let identity = DMatrix::<f64>::identity(n, n);
    let fundamental = &identity - &kernel + &projector;
    let deviation = linalg::solve(&fundamental, &(&identity - &projector))?;

    let gain = &projector * &reward;
    let mut biases = vec![gain];
    if max_order >= 0 {
        biases.push(&deviation * &reward);
    }
    let mut eval = PolicyEvaluation {
        policy,
        chain,
        kernel,
        reward,
        projector,
        deviation,
        biases,
    };
    eval.extend_to(max_order);
    Ok(eval)
}

/// `P*` from the stationary law of each recurrent class and the absorption
/// probabilities of the transient states into each class.
pub fn stationary_projector(kernel: &DMatrix<f64>, chain: &ChainStructure) -> Result<DMatrix<f64>> {
    let n = kernel.nrows();
    let mut projector = DMatrix::<f64>::zeros(n, n);
    let mut laws = Vec::with_capacity(chain.recurrent_classes.len());
    for class in &chain.recurrent_classes {
        let k = class.len();
        // μ (I - P_C) = 0 with one equation swapped for Σ μ = 1.
        let mut a = DMatrix::<f64>::zeros(k, k);
        for (i, &s) in class.iter().enumerate() {
            for (j, &t) in class.iter().enumerate() {
                let delta = if i == j { 1.0 } else { 0.0 };
                a[(j, i)] = delta - kernel[(s, t)];
            }
        }
        for i in 0..k {
            a[(k - 1, i)] = 1.0;
        }
        let mut b = DMatrix::<f64>::zeros(k, 1);
        b[(k - 1, 0)] = 1.0;
        let mu = linalg::solve(&a, &b)?;
        for &s in class {
            for (j, &t) in class.iter().enumerate() {
                projector[(s, t)] = mu[(j, 0)];
            }
        }
        laws.push(mu);
    }

    let transient = &chain.transient;
    if !transient.is_empty() {
        let m = transient.len();
        let c = chain.recurrent_classes.len();
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut b = DMatrix::<f64>::zeros(m, c);
        for (i, &s) in transient.iter().enumerate() {
            for (j, &t) in transient.iter().enumerate() {
                a[(i, j)] -= kernel[(s, t)];
            }
            for (ci, class) in chain.recurrent_classes.iter().enumerate() {
                b[(i, ci)] = class.iter().map(|&t| kernel[(s, t)]).sum();
            }
        }
        let absorption = linalg::solve(&a, &b)?;
        for (i, &s) in transient.iter().enumerate() {
            for (ci, class) in chain.recurrent_classes.iter().enumerate() {
                let weight = absorption[(i, ci)];
                for (j, &t) in class.iter().enumerate() {
                    projector[(s, t)] += weight * laws[ci][(j, 0)];
                }
            }
        }
    }
    Ok(projector)
}

/// `Δ_m^π(s, a)` for every pair, at a fixed order `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapTable {
    pub order: i32,
    /// `values[s][a]`.
    pub values: Vec<Vec<f64>>,
}

impl GapTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s][a]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }
}

/// `r_m = r` when `m = 0`, zero otherwise.
pub fn order_reward(model: &MdpModel, order: i32, s: usize, a: usize) -> f64 {
    if order == 0 {
        model.reward(s, a)
    } else {
        0.0
    }
}

/// `r_m(s, a) + p(s, a) · h_m`.
pub fn lookahead(model: &MdpModel, order: i32, h: &DVector<f64>, s: usize, a: usize) -> f64 {
    let row = model.kernel(s, a);
    order_reward(model, order, s, a) + row.iter().zip(h.iter()).map(|(p, v)| p * v).sum::<f64>()
}

/// `Δ_m(s, a) = h_m(s) + h_{m-1}(s) - p(s, a) h_m - r_m(s, a)` with `h_{-2} = 0`.
pub fn gap_table(model: &MdpModel, eval: &PolicyEvaluation, order: i32) -> Result<GapTable> {
    let h = eval.bias(order)?;
    let previous = if order == -1 {
        None
    } else {
        Some(eval.bias(order - 1)?)
    };
    let values = (0..model.state_count())
        .map(|s| {
            let base = h[s] + previous.map_or(0.0, |p| p[s]);
            (0..model.action_count(s))
                .map(|a| base - lookahead(model, order, h, s, a))
                .collect()
        })
        .collect();
    Ok(GapTable { order, values })
}

pub fn span(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.max() - v.min()
}

fn check_policy_cap(model: &MdpModel, cap: usize) -> Result<()> {
    let count = model.policy_count();
    if count > cap as f64 {
        return Err(Error::TooManyPolicies { count, cap });
    }
    Ok(())
}

/// Evaluates every policy up to `max_order`, in lexicographic policy order.
pub fn evaluate_all(model: &MdpModel, max_order: i32, cap: usize) -> Result<Vec<PolicyEvaluation>> {
    check_policy_cap(model, cap)?;
    model
        .policies()
        .map(|p| evaluate(model, &p, max_order))
        .collect()
}

/// `D*(M)`: the largest generalized diameter over all policies.
pub fn worst_diameter(model: &MdpModel) -> Result<f64> {
    worst_diameter_capped(model, POLICY_CAP)
}

pub fn worst_diameter_capped(model: &MdpModel, cap: usize) -> Result<f64> {
    check_policy_cap(model, cap)?;
    let mut worst: f64 = 0.0;
    for policy in model.policies() {
        let d = chain::generalized_diameter(&model.policy_kernel(&policy))?;
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Sensitivity constants `α_0, ..., α_max` of the lookahead values to model
/// perturbations:
/// `α_n = max_π (1 + ½ span h_n^π) + ((12 + (16 + |S|) D*) D*)^{n+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaConstants {
    pub worst_diameter: f64,
    pub values: Vec<f64>,
}

impl AlphaConstants {
    pub fn compute(model: &MdpModel, max_order: i32, cap: usize) -> Result<Self> {
        let max_order = max_order.max(0);
        let d = worst_diameter_capped(model, cap)?;
        let evals = evaluate_all(model, max_order, cap)?;
        let base = (12.0 + (16.0 + model.state_count() as f64) * d) * d;
        let values = (0..=max_order)
            .map(|n| {
                let spread = evals
                    .iter()
                    .map(|e| 1.0 + 0.5 * span(e.bias(n).expect("evaluated to max_order")))
                    .fold(f64::NEG_INFINITY, f64::max);
                spread + base.powi(n + 1)
            })
            .collect();
        Ok(Self {
            worst_diameter: d,
            values,
        })
    }

    /// `α_n`; orders below zero use `α_0`.
    pub fn get(&self, order: i32) -> f64 {
        self.values[order.max(0) as usize]
    }
}

pub fn alpha_constant(model: &MdpModel, n: i32) -> Result<f64> {
    Ok(AlphaConstants::compute(model, n, POLICY_CAP)?.get(n))
}
