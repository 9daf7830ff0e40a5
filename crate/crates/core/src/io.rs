//! JSON formats.
//!
//! A model is
//! `{"states": [names], "actions": {state: [{"name", "reward": {"mean", "dist"}, "p": {state: prob}}]}}`
//! and a policy is `{state: action_name}`. Model files keep full float
//! precision so rows still sum to one after a round trip; reports round to
//! 12 significant digits and write infinities as the strings `"inf"` and
//! `"-inf"`.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::{Action, ActionMask, MdpModel, Policy, RewardDist};

fn malformed(msg: impl Into<String>) -> Error {
    Error::Malformed(msg.into())
}

pub fn model_to_json(model: &MdpModel) -> Value {
    let names = model.state_names();
    let mut actions = Map::new();
    for (s, name) in names.iter().enumerate() {
        let list: Vec<Value> = model
            .actions(s)
            .iter()
            .map(|a| {
                let p: Map<String, Value> = a
                    .kernel
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(t, &x)| (names[t].clone(), json!(x)))
                    .collect();
                json!({
                    "name": a.name,
                    "reward": {"mean": a.mean, "dist": a.dist},
                    "p": p,
                })
            })
            .collect();
        actions.insert(name.clone(), Value::Array(list));
    }
    json!({"states": names, "actions": actions})
}

pub fn model_from_json(value: &Value) -> Result<MdpModel> {
    let states: Vec<String> = value
        .get("states")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing `states` array"))?
        .iter()
        .map(|v| v.as_str().map(str::to_owned).ok_or_else(|| malformed("state names must be strings")))
        .collect::<Result<_>>()?;
    if states.is_empty() {
        return Err(malformed("no states"));
    }
    let index = |name: &str| states.iter().position(|s| s == name);
    for (i, s) in states.iter().enumerate() {
        if index(s) != Some(i) {
            return Err(malformed(format!("duplicate state `{s}`")));
        }
    }
    let table = value
        .get("actions")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed("missing `actions` object"))?;
    if let Some(extra) = table.keys().find(|k| index(k).is_none()) {
        return Err(malformed(format!("actions listed for unknown state `{extra}`")));
    }
    let mut actions = Vec::with_capacity(states.len());
    for state in &states {
        let list = table
            .get(state)
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(format!("no action list for state `{state}`")))?;
        let mut parsed: Vec<Action> = Vec::with_capacity(list.len());
        for entry in list {
            let action = parse_action(entry, &states, state)?;
            if parsed.iter().any(|a| a.name == action.name) {
                return Err(malformed(format!("duplicate action `{}` at `{state}`", action.name)));
            }
            parsed.push(action);
        }
        actions.push(parsed);
    }
    MdpModel::new(states, actions)
}

fn parse_action(entry: &Value, states: &[String], state: &str) -> Result<Action> {
    let name = entry
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("action without name at `{state}`")))?;
    let reward = entry
        .get("reward")
        .ok_or_else(|| malformed(format!("action `{name}` at `{state}` has no reward")))?;
    let mean = reward
        .get("mean")
        .and_then(Value::as_f64)
        .ok_or_else(|| malformed(format!("action `{name}` at `{state}` has no reward mean")))?;
    let dist = match reward.get("dist") {
        None => RewardDist::Point,
        Some(d) => serde_json::from_value(d.clone())
            .map_err(|_| malformed(format!("unknown reward dist {d} for `{name}` at `{state}`")))?,
    };
    let p = entry
        .get("p")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed(format!("action `{name}` at `{state}` has no `p` object")))?;
    let mut kernel = vec![0.0; states.len()];
    for (target, prob) in p {
        let t = states
            .iter()
            .position(|s| s == target)
            .ok_or_else(|| malformed(format!("unknown next state `{target}`")))?;
        kernel[t] = prob
            .as_f64()
            .ok_or_else(|| malformed(format!("probability of `{target}` is not a number")))?;
    }
    Ok(Action::new(name, kernel, mean, dist))
}

pub fn parse_model(text: &str) -> Result<MdpModel> {
    model_from_json(&serde_json::from_str(text)?)
}

pub fn model_to_string(model: &MdpModel) -> String {
    serde_json::to_string_pretty(&model_to_json(model)).expect("json values always serialize")
}

pub fn policy_to_json(model: &MdpModel, policy: &Policy) -> Value {
    let map: Map<String, Value> = policy
        .choices()
        .iter()
        .enumerate()
        .map(|(s, &a)| (model.state_names()[s].clone(), json!(model.action(s, a).name)))
        .collect();
    Value::Object(map)
}

pub fn policy_from_json(model: &MdpModel, value: &Value) -> Result<Policy> {
    let map = value
        .as_object()
        .ok_or_else(|| malformed("a policy is an object from state to action name"))?;
    let mut choices = Vec::with_capacity(model.state_count());
    for (s, state) in model.state_names().iter().enumerate() {
        let name = map
            .get(state)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidPolicy(format!("no action for state `{state}`")))?;
        let a = model
            .action_index(s, name)
            .ok_or_else(|| Error::InvalidPolicy(format!("unknown action `{name}` at `{state}`")))?;
        choices.push(a);
    }
    if map.len() != model.state_count() {
        return Err(Error::InvalidPolicy("policy names unknown states".into()));
    }
    Ok(Policy::new(choices))
}

/// `{state: [action names]}`.
pub fn mask_to_json(model: &MdpModel, mask: &ActionMask) -> Value {
    let map: Map<String, Value> = (0..model.state_count())
        .map(|s| {
            let names: Vec<&str> = mask.allowed(s).iter().map(|&a| model.action(s, a).name.as_str()).collect();
            (model.state_names()[s].clone(), json!(names))
        })
        .collect();
    Value::Object(map)
}

/// Rounds to 12 significant digits; `-0` becomes `0`.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// A report number: rounded, with infinities as strings and NaN as null.
pub fn number(x: f64) -> Value {
    if x.is_nan() {
        Value::Null
    } else if x.is_infinite() {
        json!(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        json!(round_sig(x))
    }
}

pub fn numbers<'a>(xs: impl IntoIterator<Item = &'a f64>) -> Value {
    Value::Array(xs.into_iter().map(|&x| number(x)).collect())
}
