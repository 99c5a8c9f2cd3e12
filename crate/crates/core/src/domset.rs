//! Greedy approximate minimum dominating set over a [`SentenceGraph`].
//!
//! The greedy repeatedly takes the candidate with the most uncovered
//! neighbors (its residual degree), then removes it and its neighbors from
//! candidacy. Covered nodes never become candidates again. Residual degrees
//! only decrease, so the max-heap uses lazy deletion: a popped entry whose
//! priority no longer matches is pushed back with the current value.
//!
//! Extra state is a handful of `O(V)` arrays plus one counter per entity.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceId;
use crate::error::{Error, Result};
use crate::sentgraph::SentenceGraph;

/// Largest graph [`brute_force_dominating_set`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeMode {
    /// Priority is the number of uncovered neighbors, updated as nodes get covered.
    #[default]
    Residual,
    /// Priority is the static graph degree, never updated.
    Static,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyOptions {
    pub degree_mode: DegreeMode,
    /// Record, per iteration, the popped priority and the true maximum over
    /// the queue (an `O(V)` scan each step).
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyStep {
    pub node: SentenceId,
    pub priority: u32,
    pub queue_max: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DominatingSetResult {
    /// Selected sentence ids, ascending.
    pub selected: Vec<SentenceId>,
    /// Selected ids in the order they were popped.
    pub selection_order: Vec<SentenceId>,
    pub iterations: usize,
    pub max_degree: u32,
    pub covered: usize,
    pub uncovered_entities: usize,
    pub trace: Vec<GreedyStep>,
}

impl DominatingSetResult {
    pub fn size(&self) -> usize {
        self.selected.len()
    }

    pub fn bound(&self) -> f64 {
        approximation_bound(self.max_degree)
    }

    pub fn export(&self) -> SelectionExport {
        SelectionExport {
            selected: self.selected.clone(),
            size: self.selected.len(),
            max_degree: self.max_degree,
            bound: self.bound(),
        }
    }
}

/// JSON export of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionExport {
    pub selected: Vec<SentenceId>,
    pub size: usize,
    pub max_degree: u32,
    pub bound: f64,
}

pub fn approx_dominating_set(graph: &SentenceGraph) -> DominatingSetResult {
    approx_dominating_set_with(graph, GreedyOptions::default())
}

pub fn approx_dominating_set_with(graph: &SentenceGraph, options: GreedyOptions) -> DominatingSetResult {
    let n = graph.node_count();
    let mut covered = vec![false; n];
    let mut priority: Vec<u32> = graph.degrees().to_vec();
    let mut uncovered_in_entity: Vec<u32> = (0..graph.entity_count())
        .map(|e| graph.posting(e).len() as u32)
        .collect();
    let mut stamp = vec![u32::MAX; n];
    let mut heap: BinaryHeap<(u32, Reverse<u32>)> =
        (0..n).map(|v| (priority[v], Reverse(v as u32))).collect();

    let mut order = Vec::new();
    let mut trace = Vec::new();
    let mut newly: Vec<u32> = Vec::new();
    let mut covered_count = 0usize;

    while let Some((p, Reverse(v))) = heap.pop() {
        let vi = v as usize;
        if covered[vi] {
            continue;
        }
        if p != priority[vi] {
            heap.push((priority[vi], Reverse(v)));
            continue;
        }
        if options.trace {
            let queue_max = (0..n)
                .filter(|&u| !covered[u])
                .map(|u| priority[u])
                .max()
                .unwrap_or(0);
            trace.push(GreedyStep {
                node: v,
                priority: p,
                queue_max,
            });
        }
        order.push(v);

        newly.clear();
        covered[vi] = true;
        newly.push(v);
        for &e in graph.node_entities(vi) {
            if uncovered_in_entity[e as usize] == 0 {
                continue;
            }
            for &u in graph.posting(e as usize) {
                if !covered[u as usize] {
                    covered[u as usize] = true;
                    newly.push(u);
                }
            }
        }
        for &u in &newly {
            for &e in graph.node_entities(u as usize) {
                uncovered_in_entity[e as usize] -= 1;
            }
        }
        covered_count += newly.len();

        if options.degree_mode == DegreeMode::Residual {
            for &u in &newly {
                for &e in graph.node_entities(u as usize) {
                    if uncovered_in_entity[e as usize] == 0 {
                        continue;
                    }
                    for &w in graph.posting(e as usize) {
                        let wi = w as usize;
                        if !covered[wi] && stamp[wi] != u {
                            stamp[wi] = u;
                            priority[wi] -= 1;
                        }
                    }
                }
            }
        }
    }

    let mut selected = order.clone();
    selected.sort_unstable();
    let uncovered_entities = graph.uncovered_entities(&selected);
    DominatingSetResult {
        iterations: order.len(),
        selected,
        selection_order: order,
        max_degree: graph.max_degree(),
        covered: covered_count,
        uncovered_entities,
        trace,
    }
}

/// True iff every node is in `candidate` or adjacent to a member of it.
pub fn is_dominating_set(graph: &SentenceGraph, candidate: &[SentenceId]) -> Result<bool> {
    let n = graph.node_count();
    let mut dominated = vec![false; n];
    for &c in candidate {
        let c = c as usize;
        if c >= n {
            return Err(Error::Argument(format!(
                "candidate node {c} out of range (graph has {n} nodes)"
            )));
        }
        dominated[c] = true;
        for u in graph.merged_neighbors(c) {
            dominated[u as usize] = true;
        }
    }
    Ok(dominated.into_iter().all(|d| d))
}

/// Exact minimum dominating set by enumerating subsets in increasing size,
/// lexicographically within a size. Returns the first valid set.
pub fn brute_force_dominating_set(graph: &SentenceGraph) -> Result<Vec<SentenceId>> {
    let n = graph.node_count();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            nodes: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let full: u32 = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let closed: Vec<u32> = (0..n)
        .map(|v| {
            graph
                .merged_neighbors(v)
                .fold(1u32 << v, |m, u| m | (1u32 << u))
        })
        .collect();

    for k in 0..=n {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            let mask = combo.iter().fold(0u32, |m, &v| m | closed[v]);
            if mask == full {
                return Ok(combo.iter().map(|&v| v as SentenceId).collect());
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
    }
    unreachable!("the full node set always dominates")
}

/// Advances `combo` to the next k-subset of `0..n` in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `ln(max(Δ, 1)) + 2`.
pub fn approximation_bound(max_degree: u32) -> f64 {
    (max_degree.max(1) as f64).ln() + 2.0
}

/// `H(n) = Σ_{i=1..n} 1/i`.
pub fn harmonic(n: u64) -> f64 {
    // Summed smallest-first to limit rounding error.
    (1..=n).rev().map(|i| 1.0 / i as f64).sum()
}
