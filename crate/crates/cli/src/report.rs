//! JSON reports printed by the subcommands.

use blackwell::certificates::Certificate;
use blackwell::eval::{gap_table, PolicyEvaluation};
use blackwell::experiment::Summary;
use blackwell::hopi::HopiTrace;
use blackwell::io::{mask_to_json, number, policy_to_json};
use blackwell::oracle::OptimalSets;
use blackwell::sim::{Checkpoint, RunRecord};
use blackwell::{MdpModel, Policy, Result};
use nalgebra::DVector;
use serde_json::{json, Map, Value};

/// `{state: value}`.
pub fn by_state(model: &MdpModel, v: &DVector<f64>) -> Value {
    let map: Map<String, Value> = model
        .state_names()
        .iter()
        .zip(v.iter())
        .map(|(s, &x)| (s.clone(), number(x)))
        .collect();
    Value::Object(map)
}

fn names(model: &MdpModel, states: &[usize]) -> Value {
    json!(states.iter().map(|&s| &model.state_names()[s]).collect::<Vec<_>>())
}

pub fn evaluation(model: &MdpModel, e: &PolicyEvaluation) -> Result<Value> {
    let mut biases = Map::new();
    let mut gaps = Map::new();
    for order in -1..=e.max_order() {
        if order >= 0 {
            biases.insert(order.to_string(), by_state(model, e.bias(order)?));
        }
        let table = gap_table(model, e, order)?;
        let per_state: Map<String, Value> = (0..model.state_count())
            .map(|s| {
                let row: Map<String, Value> = model
                    .actions(s)
                    .iter()
                    .enumerate()
                    .map(|(a, action)| (action.name.clone(), number(table.get(s, a))))
                    .collect();
                (model.state_names()[s].clone(), Value::Object(row))
            })
            .collect();
        gaps.insert(order.to_string(), Value::Object(per_state));
    }
    let classes: Vec<Value> = e.chain.recurrent_classes.iter().map(|c| names(model, c)).collect();
    Ok(json!({
        "policy": policy_to_json(model, &e.policy),
        "unichain": e.chain.is_unichain(),
        "recurrent_classes": classes,
        "transient": names(model, &e.chain.transient),
        "gain": by_state(model, e.gain()),
        "biases": biases,
        "gaps": gaps,
    }))
}

pub fn trace(model: &MdpModel, t: &HopiTrace) -> Value {
    let masks: Map<String, Value> = t.masks.iter().map(|(m, mask)| (m.to_string(), mask_to_json(model, mask))).collect();
    let starts: Map<String, Value> = t.phase_starts.iter().map(|(m, k)| (m.to_string(), json!(k))).collect();
    json!({
        "order": t.order,
        "epsilon": number(t.epsilon),
        "masks": masks,
        "phase_starts": starts,
        "policy": policy_to_json(model, &t.final_policy),
        "iterations": t.iterations(),
    })
}

fn policies(model: &MdpModel, list: &[Policy]) -> Value {
    Value::Array(list.iter().map(|p| policy_to_json(model, p)).collect())
}

pub fn oracle(model: &MdpModel, sets: &OptimalSets, bellman: &[Policy]) -> Value {
    let levels: Map<String, Value> = sets
        .levels
        .iter()
        .map(|l| {
            let level = json!({"policies": policies(model, &l.policies), "best": by_state(model, &l.best)});
            (l.order.to_string(), level)
        })
        .collect();
    json!({
        "policy_count": sets.all.len(),
        "optimal": levels,
        "bellman_optimal": policies(model, bellman),
    })
}

pub fn certificate(model: &MdpModel, c: &Certificate) -> Value {
    json!({
        "unique": c.unique,
        "policy": c.policy.as_ref().map(|p| policy_to_json(model, p)),
        "dmin_gap": number(c.dmin_gap),
        "bias_span": number(c.bias_span),
        "alpha": number(c.alpha),
        "beta": number(c.beta),
    })
}

pub fn checkpoint(model: &MdpModel, seed: u64, c: &Checkpoint) -> Value {
    json!({
        "seed": seed,
        "t": c.t,
        "recommended": policy_to_json(model, &c.recommended),
        "epsilon": number(c.epsilon),
        "min_visits": c.min_visits,
        "xi": number(c.xi),
        "beta": number(c.beta),
        "certified": c.certified,
        "stopped": c.stopped,
        "correct": c.correct,
    })
}

pub fn run_jsonl(model: &MdpModel, run: &RunRecord) -> String {
    run.checkpoints
        .iter()
        .map(|c| checkpoint(model, run.seed, c).to_string() + "\n")
        .collect()
}

pub fn run_summary(model: &MdpModel, run: &RunRecord) -> Value {
    let last = run.checkpoints.last();
    json!({
        "seed": run.seed,
        "steps": run.steps,
        "tau": run.tau,
        "recommended": last.map(|c| policy_to_json(model, &c.recommended)),
        "correct": last.and_then(|c| c.correct),
    })
}

pub fn summary(s: &Summary) -> Value {
    json!({
        "runs": s.runs,
        "stopped": s.stopped,
        "stop_rate": number(s.stop_rate),
        "mean_tau": number(s.mean_tau),
        "error_at_tau": number(s.error_at_tau),
    })
}
