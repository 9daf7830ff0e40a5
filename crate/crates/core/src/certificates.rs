//! Uniqueness certificates and the thresholds of the stopping rule.

use serde::Serialize;

use crate::chain::hitting_times;
use crate::error::{Error, Result};
use crate::eval::{self, gap_table, span, AlphaConstants, PolicyEvaluation, POLICY_CAP};
use crate::hopi::{hopi_run, TAU_EQ};
use crate::model::{MdpModel, Policy};

/// Default strict-gap tolerance on exact models.
pub const TOL_STRICT: f64 = 1e-9;

/// Tolerance of the strict off-policy gap test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapTolerance {
    Absolute(f64),
    /// `max(1e-9, 1e-6 (1 + span h))`, for estimated models.
    Relative,
}

impl GapTolerance {
    fn resolve(self, bias_span: f64) -> f64 {
        match self {
            Self::Absolute(tol) => tol,
            Self::Relative => (1e-6 * (1.0 + bias_span)).max(1e-9),
        }
    }
}

/// Outcome of [`unique_bellman_check`].
#[derive(Debug, Clone)]
pub struct UniqueCheck {
    pub unique: bool,
    /// The Bellman optimal policy found by HOPI(0, 0).
    pub policy: Policy,
    pub evaluation: PolicyEvaluation,
    pub tolerance: f64,
}

/// Polynomial test for a unique Bellman optimal policy: the policy found by
/// HOPI(0, 0) must be unichain and every other action must have an order 0
/// gap above the tolerance.
pub fn unique_bellman_check(model: &MdpModel, tol: GapTolerance) -> Result<UniqueCheck> {
    let policy = hopi_run(model, 0, 0.0)?.final_policy;
    let evaluation = eval::evaluate(model, &policy, 0)?;
    let tolerance = tol.resolve(span(evaluation.bias(0)?));
    let gaps = gap_table(model, &evaluation, 0)?;
    let strict = model
        .pairs()
        .filter(|&(s, a)| a != policy.action(s))
        .all(|(s, a)| gaps.get(s, a) > tolerance);
    Ok(UniqueCheck {
        unique: evaluation.chain.is_unichain() && strict,
        policy,
        evaluation,
        tolerance,
    })
}

/// The certified radius `β` and its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub unique: bool,
    /// Present iff `unique`.
    pub policy: Option<Policy>,
    /// Smallest off-policy gap above the tolerance, `+∞` if none.
    pub dmin_gap: f64,
    pub bias_span: f64,
    /// Best recurrent target's worst expected hitting time.
    pub alpha: f64,
    /// `+∞` when not unique.
    pub beta: f64,
}

/// `β = min{ dmin / ((1 + 4α)(2 + span h)), 1/α }` for a unique Bellman
/// optimal policy, `+∞` otherwise.
pub fn beta_threshold(model: &MdpModel) -> Result<Certificate> {
    beta_threshold_with(model, GapTolerance::Absolute(TOL_STRICT))
}

pub fn beta_threshold_with(model: &MdpModel, tol: GapTolerance) -> Result<Certificate> {
    let check = unique_bellman_check(model, tol)?;
    let e = &check.evaluation;
    let gaps = gap_table(model, e, 0)?;
    let dmin_gap = model
        .pairs()
        .filter(|&(s, a)| a != check.policy.action(s))
        .map(|(s, a)| gaps.get(s, a))
        .filter(|&g| g > check.tolerance)
        .fold(f64::INFINITY, f64::min);
    let bias_span = span(e.bias(0)?);
    let mut alpha = f64::INFINITY;
    for target in e.chain.recurrent_states() {
        let times = hitting_times(&e.kernel, &[target])?;
        alpha = alpha.min(times.into_iter().fold(0.0, f64::max));
    }
    let beta = if check.unique {
        (dmin_gap / ((1.0 + 4.0 * alpha) * (2.0 + bias_span))).min(1.0 / alpha)
    } else {
        f64::INFINITY
    };
    Ok(Certificate {
        unique: check.unique,
        policy: check.unique.then_some(check.policy),
        dmin_gap,
        bias_span,
        alpha,
        beta,
    })
}

/// Which confidence radius formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XiVariant {
    /// `sqrt(|S| ln(2|Z|(1+t)/δ) / min N)`.
    #[default]
    Main,
    /// `sqrt(|S| ln(4|Z| sqrt(1 + min N)/δ) / min N)`.
    Appendix,
}

/// Time-uniform confidence radius around the empirical model, `+∞` before
/// every pair has been visited.
pub fn xi_confidence(
    t: u64,
    min_visits: u64,
    state_count: usize,
    pair_count: usize,
    delta: f64,
    variant: XiVariant,
) -> f64 {
    if min_visits == 0 {
        return f64::INFINITY;
    }
    let n = min_visits as f64;
    let z = pair_count as f64;
    let log = match variant {
        XiVariant::Main => (2.0 * z * (1.0 + t as f64) / delta).ln(),
        XiVariant::Appendix => (4.0 * z * (1.0 + n).sqrt() / delta).ln(),
    };
    (state_count as f64 * log / n).sqrt()
}

/// Smallest distance between two distinct values (at [`TAU_EQ`]), `+∞` with
/// fewer than two distinct values.
pub fn dgap(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > TAU_EQ)
        .fold(f64::INFINITY, f64::min)
}

/// `dgap` of the order `m` gap table of each policy, minimized over
/// policies, for `m = -1..=max_order`.
pub fn dgap_per_order(model: &MdpModel, max_order: i32) -> Result<Vec<f64>> {
    let evals = eval::evaluate_all(model, max_order, POLICY_CAP)?;
    (-1..=max_order)
        .map(|m| {
            evals.iter().try_fold(f64::INFINITY, |acc, e| {
                Ok(acc.min(dgap(gap_table(model, e, m)?.iter())))
            })
        })
        .collect()
}

/// Minimal gap between distinct gap values, over orders `-1..=m` and over
/// every policy.
pub fn dgap_order(model: &MdpModel, m: i32) -> Result<f64> {
    Ok(dgap_per_order(model, m)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Perturbation size under which HOPI(n, 0) on the model and HOPI(n, ε) on
/// the perturbed model take the same decisions:
/// `min{ 1/D*, ε/(2α_n), min_{m ≤ n+2} (dgap_m - ε)/(2α_m) }`, clamped at 0.
pub fn bissimulation_radius(model: &MdpModel, n: i32, epsilon: f64) -> Result<f64> {
    if n < -1 {
        return Err(Error::OrderOutOfRange { order: n, max: i32::MAX });
    }
    let alphas = AlphaConstants::compute(model, n + 2, POLICY_CAP)?;
    let gaps = dgap_per_order(model, n + 2)?;
    let mut radius = (1.0 / alphas.worst_diameter).min(epsilon / (2.0 * alphas.get(n)));
    for (m, g) in (-1..=n + 2).zip(gaps) {
        if g.is_finite() {
            radius = radius.min((g - epsilon) / (2.0 * alphas.get(m)));
        }
    }
    Ok(radius.max(0.0))
}
