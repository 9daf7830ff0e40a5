//! Structure of a finite Markov chain: recurrent classes, hitting times and
//! the generalized diameter.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};
use crate::linalg;

/// Default cap on the number of recurrent-class coverings enumerated by
/// [`generalized_diameter`].
pub const COVERING_CAP: usize = 1_000_000;

/// Recurrent classes (bottom strongly connected components) and transient
/// states of a chain. Classes are sorted by their smallest state and each
/// class is sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStructure {
    pub recurrent_classes: Vec<Vec<usize>>,
    pub transient: Vec<usize>,
}

impl ChainStructure {
    pub fn of_kernel(kernel: &DMatrix<f64>) -> Self {
        let n = kernel.nrows();
        let mut graph = DiGraph::<(), ()>::with_capacity(n, n * n);
        let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
        for s in 0..n {
            for t in 0..n {
                if kernel[(s, t)] > 0.0 {
                    graph.add_edge(nodes[s], nodes[t], ());
                }
            }
        }
        let mut component = vec![0; n];
        let sccs = tarjan_scc(&graph);
        for (c, scc) in sccs.iter().enumerate() {
            for node in scc {
                component[node.index()] = c;
            }
        }
        let mut closed = vec![true; sccs.len()];
        for s in 0..n {
            for t in 0..n {
                if kernel[(s, t)] > 0.0 && component[s] != component[t] {
                    closed[component[s]] = false;
                }
            }
        }
        let mut recurrent_classes: Vec<Vec<usize>> = sccs
            .iter()
            .enumerate()
            .filter(|(c, _)| closed[*c])
            .map(|(_, scc)| {
                let mut class: Vec<usize> = scc.iter().map(|v| v.index()).collect();
                class.sort_unstable();
                class
            })
            .collect();
        recurrent_classes.sort_by_key(|c| c[0]);
        let transient = (0..n).filter(|&s| !closed[component[s]]).collect();
        Self {
            recurrent_classes,
            transient,
        }
    }

    pub fn is_unichain(&self) -> bool {
        self.recurrent_classes.len() == 1
    }

    /// Index of the recurrent class containing `s`, if any.
    pub fn class_of(&self, s: usize) -> Option<usize> {
        self.recurrent_classes
            .iter()
            .position(|c| c.binary_search(&s).is_ok())
    }

    pub fn recurrent_states(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.recurrent_classes.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }
}

/// Expected hitting times `E_s[τ]` with `τ = inf{t ≥ 1 : S_t ∈ target}` and
/// `S_1 = s`, so states of the target have hitting time 1. States from which
/// the target is not reached almost surely get `+∞`.
pub fn hitting_times(kernel: &DMatrix<f64>, target: &[usize]) -> Result<Vec<f64>> {
    let n = kernel.nrows();
    let mut in_target = vec![false; n];
    for &t in target {
        in_target[t] = true;
    }
    let preds: Vec<Vec<usize>> = (0..n)
        .map(|t| (0..n).filter(|&s| kernel[(s, t)] > 0.0).collect())
        .collect();

    // States that can reach the target at all.
    let mut reaches = in_target.clone();
    let mut queue: VecDeque<usize> = target.iter().copied().collect();
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if !reaches[s] {
                reaches[s] = true;
                queue.push_back(s);
            }
        }
    }
    // States that may wander into a region that never hits the target.
    let mut doomed: Vec<bool> = (0..n).map(|s| !reaches[s]).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| doomed[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if !doomed[s] && !in_target[s] {
                doomed[s] = true;
                queue.push_back(s);
            }
        }
    }

    let free: Vec<usize> = (0..n).filter(|&s| !in_target[s] && !doomed[s]).collect();
    let mut times = vec![f64::INFINITY; n];
    for &t in target {
        times[t] = 1.0;
    }
    if free.is_empty() {
        return Ok(times);
    }
    let k = free.len();
    let mut a = DMatrix::<f64>::identity(k, k);
    let mut b = DMatrix::<f64>::from_element(k, 1, 1.0);
    for (i, &s) in free.iter().enumerate() {
        for (j, &t) in free.iter().enumerate() {
            a[(i, j)] -= kernel[(s, t)];
        }
        for &t in target {
            b[(i, 0)] += kernel[(s, t)];
        }
    }
    let x = linalg::solve(&a, &b)?;
    for (i, &s) in free.iter().enumerate() {
        times[s] = x[(i, 0)];
    }
    Ok(times)
}

/// Worst expected hitting time, over start states and over every choice of one
/// representative per recurrent class, of the chosen representatives.
pub fn generalized_diameter(kernel: &DMatrix<f64>) -> Result<f64> {
    generalized_diameter_capped(kernel, COVERING_CAP)
}

pub fn generalized_diameter_capped(kernel: &DMatrix<f64>, cap: usize) -> Result<f64> {
    let chain = ChainStructure::of_kernel(kernel);
    let classes = &chain.recurrent_classes;
    let count: f64 = classes.iter().map(|c| c.len() as f64).product();
    if count > cap as f64 {
        return Err(Error::TooManyCoverings { count, cap });
    }
    let mut cursor = vec![0usize; classes.len()];
    let mut worst: f64 = 0.0;
    loop {
        let target: Vec<usize> = cursor.iter().zip(classes).map(|(&i, c)| c[i]).collect();
        let times = hitting_times(kernel, &target)?;
        worst = times.iter().copied().fold(worst, f64::max);

        let mut c = cursor.len();
        loop {
            if c == 0 {
                return Ok(worst);
            }
            c -= 1;
            cursor[c] += 1;
            if cursor[c] < classes[c].len() {
                break;
            }
            cursor[c] = 0;
        }
    }
}
