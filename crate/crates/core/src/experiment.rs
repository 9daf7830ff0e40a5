//! Batches of seeded learning runs, their CSV log and summary.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::MdpModel;
use crate::oracle::OptimalSets;
use crate::sim::{hope_run, RunConfig, RunRecord};

/// Runs one learning loop per seed, in parallel, returned in seed order.
pub fn run_seeds(
    model: &MdpModel,
    config: &RunConfig,
    seeds: &[u64],
    reference: Option<&OptimalSets>,
) -> Result<Vec<RunRecord>> {
    seeds
        .par_iter()
        .map(|&seed| hope_run(model, &RunConfig { seed, ..config.clone() }, reference))
        .collect()
}

/// Header of the per-checkpoint CSV.
pub const CSV_HEADER: [&str; 7] = ["seed", "t", "recommended", "correct", "xi", "beta", "stopped"];

/// One row per checkpoint. The policy is written as action names joined by
/// `|`, `correct` is empty without a reference.
pub fn write_csv<W: Write>(model: &MdpModel, records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        for c in &r.checkpoints {
            let policy: Vec<&str> = c
                .recommended
                .choices()
                .iter()
                .enumerate()
                .map(|(s, &a)| model.action(s, a).name.as_str())
                .collect();
            w.write_record([
                r.seed.to_string(),
                c.t.to_string(),
                policy.join("|"),
                c.correct.map(|b| b.to_string()).unwrap_or_default(),
                format_float(c.xi),
                format_float(c.beta),
                c.stopped.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// 12 significant digits, `inf` for infinities.
pub fn format_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        crate::io::round_sig(x).to_string()
    }
}

/// Aggregates over a batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub stopped: usize,
    pub stop_rate: f64,
    /// Mean stopping time over stopped runs; NaN when none stopped.
    pub mean_tau: f64,
    /// Fraction of stopped runs whose recommendation at τ is wrong; NaN when
    /// none stopped or no reference was given.
    pub error_at_tau: f64,
}

pub fn summarize(records: &[RunRecord]) -> Summary {
    let stops: Vec<_> = records.iter().filter_map(|r| r.stopping_checkpoint()).collect();
    let stopped = stops.len();
    let mean_tau = stops.iter().map(|c| c.t as f64).sum::<f64>() / stopped as f64;
    let judged: Vec<bool> = stops.iter().filter_map(|c| c.correct).collect();
    let error_at_tau = if judged.is_empty() {
        f64::NAN
    } else {
        judged.iter().filter(|&&ok| !ok).count() as f64 / judged.len() as f64
    };
    Summary {
        runs: records.len(),
        stopped,
        stop_rate: stopped as f64 / records.len().max(1) as f64,
        mean_tau: if stopped == 0 { f64::NAN } else { mean_tau },
        error_at_tau,
    }
}

/// Fraction of runs whose recommendation at time `t` is wrong, over runs
/// with a judged checkpoint at or before `t`.
pub fn error_rate_at(records: &[RunRecord], t: u64) -> f64 {
    let judged: Vec<bool> = records.iter().filter_map(|r| r.at(t).and_then(|c| c.correct)).collect();
    judged.iter().filter(|&&ok| !ok).count() as f64 / judged.len().max(1) as f64
}
