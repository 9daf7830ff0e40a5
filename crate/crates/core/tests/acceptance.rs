//! Acceptance suite: one test per criterion, each printing a verdict line.
//! Run with `cargo test --test acceptance -- --nocapture` to see them.

mod common;

use blackwell::certificates::{
    beta_threshold, bissimulation_radius, dgap_order, unique_bellman_check, GapTolerance, TOL_STRICT,
};
use blackwell::eval::{evaluate, span};
use blackwell::experiment::{error_rate_at, run_seeds, summarize};
use blackwell::hopi::hopi_run;
use blackwell::oracle::{bellman_optimal_set, optimal_policy_sets, ORACLE_TOL};
use blackwell::sim::{RunConfig, Schedule};
use blackwell::transforms::{builtin_instance, isolate_bellman};
use blackwell::{mdp_distance, support_covers, Policy};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn criterion_1_oracle_sandwich() {
    let mut checked = 0;
    let mut violations = Vec::new();
    for (i, m) in corpus().iter().enumerate() {
        for n in -1..=2 {
            let trace = hopi_run(m, n, 0.0).unwrap();
            let sets = optimal_policy_sets(m, n + 1, ORACLE_TOL).unwrap();
            let mask = trace.final_mask();
            let upper = sets.set(n).unwrap();
            let lower = sets.set(n + 1).unwrap();
            let inside: Vec<Policy> = mask.policies().collect();
            let ok = lower.iter().all(|p| mask.contains(p)) && inside.iter().all(|p| upper.contains(p));
            checked += 1;
            if !ok {
                violations.push((i, n));
            }
        }
    }
    report(
        1,
        violations.is_empty(),
        format!("{checked} (instance, order) cases, violations {violations:?}"),
    );
}

#[test]
fn criterion_2_lexicographic_improvement() {
    const EQ: f64 = 1e-7;
    const STRICT: f64 = 1e-9;
    let mut changes = 0;
    let mut violations = Vec::new();
    for (i, m) in corpus().iter().enumerate() {
        let trace = hopi_run(m, 2, 0.0).unwrap();
        let evals: Vec<_> = trace.policies.iter().map(|p| evaluate(m, p, 3).unwrap()).collect();
        for (k, pair) in evals.windows(2).enumerate() {
            changes += 1;
            let improved = (-1..=3).find_map(|order| {
                let diff: DVector<f64> = pair[1].bias(order).unwrap() - pair[0].bias(order).unwrap();
                (diff.amax() > EQ).then(|| diff.min() >= -EQ && diff.max() > STRICT)
            });
            if improved != Some(true) {
                violations.push((i, k + 1));
            }
        }
    }
    report(
        2,
        violations.is_empty(),
        format!("{changes} policy changes, violations {violations:?}"),
    );
}

/// Radii below this are too close to double precision for a perturbation
/// inside half the radius to be represented faithfully.
const RESOLVABLE_RADIUS: f64 = 1e-12;

#[test]
fn criterion_3_bissimulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut instances = Vec::new();
    let mut mismatches = Vec::new();
    for seed in 0..20_000u64 {
        if instances.len() == 50 {
            break;
        }
        let m = corpus_instance(seed);
        let epsilon = dgap_order(&m, 3).unwrap() / 4.0;
        if !epsilon.is_finite() {
            continue;
        }
        let radius = bissimulation_radius(&m, 1, epsilon).unwrap();
        if radius <= RESOLVABLE_RADIUS {
            continue;
        }
        instances.push(seed);
        let exact = hopi_run(&m, 1, 0.0).unwrap();
        for _ in 0..10 {
            let direction = random_direction(&m, &mut rng, false);
            let target = rng.random_range(0.0..0.5) * radius;
            let lambda = target / mdp_distance(&m, &direction).unwrap();
            let perturbed = mix(&m, &direction, lambda);
            assert!(mdp_distance(&m, &perturbed).unwrap() <= 0.5 * radius);
            let soft = hopi_run(&perturbed, 1, epsilon).unwrap();
            if soft.policies != exact.policies || soft.masks != exact.masks || soft.phase_starts != exact.phase_starts {
                mismatches.push(seed);
            }
        }
    }
    report(
        3,
        instances.len() == 50 && mismatches.is_empty(),
        format!(
            "{} instances with radius above {RESOLVABLE_RADIUS:e} x 10 perturbations, mismatching seeds {mismatches:?}",
            instances.len()
        ),
    );
}

#[test]
fn criterion_4_unique_bellman_agreement() {
    let fig = builtin_instance("fig-shatter").unwrap();
    let target = by_names(&fig, &["goA", "stay"]);
    let isolated = isolate_bellman(&fig, &target, 0.01, false).unwrap();
    let mut models = corpus();
    models.push(fig);
    models.push(isolated);
    let mut disagreements = Vec::new();
    let mut unique_count = 0;
    for (i, m) in models.iter().enumerate() {
        let check = unique_bellman_check(m, GapTolerance::Absolute(TOL_STRICT)).unwrap();
        let oracle = bellman_optimal_set(m, ORACLE_TOL).unwrap();
        unique_count += usize::from(oracle.len() == 1);
        if check.unique != (oracle.len() == 1) {
            disagreements.push(i);
        }
    }
    let n = models.len();
    let fig_ok = !unique_bellman_check(&models[n - 2], GapTolerance::Absolute(TOL_STRICT)).unwrap().unique
        && unique_bellman_check(&models[n - 1], GapTolerance::Absolute(TOL_STRICT)).unwrap().unique;
    report(
        4,
        disagreements.is_empty() && fig_ok,
        format!("{n} instances, {unique_count} unique per oracle, disagreements {disagreements:?}"),
    );
}

#[test]
fn criterion_5_certified_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut certified = 0;
    let mut counterexamples = Vec::new();
    for (i, m) in corpus().iter().enumerate() {
        if certified == 20 {
            break;
        }
        let cert = beta_threshold(m).unwrap();
        if !cert.unique {
            continue;
        }
        certified += 1;
        let policy = cert.policy.clone().unwrap();
        for _ in 0..50 {
            let direction = random_direction(m, &mut rng, true);
            let target = rng.random_range(0.0..1.0) * cert.beta;
            let lambda = (target / mdp_distance(m, &direction).unwrap()).min(1.0);
            let perturbed = mix(m, &direction, lambda);
            assert!(support_covers(&perturbed, m).unwrap());
            assert!(mdp_distance(m, &perturbed).unwrap() < cert.beta);
            if bellman_optimal_set(&perturbed, ORACLE_TOL).unwrap() != vec![policy.clone()] {
                counterexamples.push(i);
            }
        }
    }
    report(
        5,
        certified == 20 && counterexamples.is_empty(),
        format!("{certified} certified instances x 50 perturbations, counterexamples {counterexamples:?}"),
    );
}

#[test]
fn criterion_6_shattering() {
    let fig = builtin_instance("fig-shatter").unwrap();
    let (shattered, target) = shattered_fig();
    let sets = optimal_policy_sets(&shattered, -1, ORACLE_TOL).unwrap();
    let distance = mdp_distance(&fig, &shattered).unwrap();
    let gain_optimal = sets.set(-1).unwrap();
    report(
        6,
        gain_optimal == [target] && distance < 0.1,
        format!("gain optimal set {gain_optimal:?}, distance to the figure instance {distance:.6}"),
    );
}

#[test]
fn criterion_7_stopping() {
    let (model, _) = certified_fig();
    let reference = optimal_policy_sets(&model, 0, ORACLE_TOL).unwrap();
    let config = RunConfig {
        order: 0,
        delta: 0.1,
        horizon: 1_000_000,
        schedule: Schedule::Doubling,
        ..RunConfig::default()
    };
    let seeds: Vec<u64> = (0..200).collect();
    let runs = run_seeds(&model, &config, &seeds, Some(&reference)).unwrap();
    let certified = summarize(&runs);
    let beta = beta_threshold(&model).unwrap().beta;

    let degenerate = builtin_instance("fig-shatter-01").unwrap();
    let config = RunConfig { horizon: 100_000, ..config };
    let seeds: Vec<u64> = (0..50).collect();
    let degenerate_runs = run_seeds(&degenerate, &config, &seeds, None).unwrap();
    let degenerate_summary = summarize(&degenerate_runs);

    let error_ok = certified.stopped > 0 && certified.error_at_tau <= 0.15;
    report(
        7,
        certified.stop_rate == 1.0 && error_ok && degenerate_summary.stop_rate == 0.0,
        format!(
            "certified: stop rate {} (beta of the true model {beta:.3e}), error at tau {}; degenerate: stop rate {}",
            certified.stop_rate, certified.error_at_tau, degenerate_summary.stop_rate
        ),
    );
}

#[test]
fn criterion_8_consistency_trend() {
    let (model, _) = certified_fig();
    let reference = optimal_policy_sets(&model, 0, ORACLE_TOL).unwrap();
    let config = RunConfig {
        order: 0,
        delta: 0.1,
        horizon: 5000,
        schedule: Schedule::Doubling,
        extra_checkpoints: vec![500, 5000],
        stop_at_tau: false,
        ..RunConfig::default()
    };
    let seeds: Vec<u64> = (0..100).collect();
    let runs = run_seeds(&model, &config, &seeds, Some(&reference)).unwrap();
    let early = error_rate_at(&runs, 500);
    let late = error_rate_at(&runs, 5000);
    report(8, late < early, format!("error rate at t=500 {early}, at t=5000 {late}"));
}

#[test]
fn criterion_9_numerical_identities() {
    const TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let m = corpus_instance(10_000 + seed);
        let policy = Policy::new((0..m.state_count()).map(|s| rng.random_range(0..m.action_count(s))).collect());
        let e = evaluate(&m, &policy, 3).unwrap();
        let n = m.state_count();
        let id = DMatrix::<f64>::identity(n, n);
        let (p, ps, d) = (&e.kernel, &e.projector, &e.deviation);
        let residuals = [
            (ps * ps - ps).amax(),
            (ps * p - ps).amax(),
            (p * ps - ps).amax(),
            (ps * d).amax(),
            (d * ps).amax(),
            ((&id - p + ps) * d - (&id - ps)).amax(),
            (e.gain() + e.bias(0).unwrap() - &e.reward - p * e.bias(0).unwrap()).amax(),
            (ps * e.bias(0).unwrap()).amax(),
            (ps * e.bias(1).unwrap()).amax(),
            (ps * e.bias(2).unwrap()).amax(),
            (ps * e.bias(3).unwrap()).amax(),
        ];
        worst = residuals.iter().copied().fold(worst, f64::max);
    }

    let mut bound_violations = 0;
    for _ in 0..10_000 {
        let k = rng.random_range(1..8);
        let q = random_row(&mut rng, k);
        let p = random_row(&mut rng, k);
        let u = DVector::from_fn(k, |_, _| rng.random_range(-10.0..10.0));
        let lhs = (&q - &p).dot(&u).abs();
        let rhs = 0.5 * span(&u) * (&q - &p).lp_norm(1);
        bound_violations += usize::from(lhs > rhs + 1e-12);
    }
    report(
        9,
        worst <= TOL && bound_violations == 0,
        format!("worst residual {worst:.3e} over 1000 pairs, span bound violations {bound_violations} of 10000"),
    );
}

fn random_row<R: Rng>(rng: &mut R, k: usize) -> DVector<f64> {
    let v = DVector::from_fn(k, |_, _| rng.random::<f64>());
    let sum = v.sum();
    v / sum
}
