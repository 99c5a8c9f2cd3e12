//! Reference implementations used as test oracles. Written for clarity,
//! not speed, and sharing no code with the library beyond its data types.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus20")
}

/// Dense adjacency matrix: two distinct nodes are adjacent iff their key sets intersect.
pub fn adjacency_from_keys(node_keys: &[Vec<String>]) -> Vec<Vec<bool>> {
    let sets: Vec<BTreeSet<&str>> = node_keys
        .iter()
        .map(|ks| ks.iter().map(String::as_str).collect())
        .collect();
    let n = sets.len();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && !sets[i].is_disjoint(&sets[j]) {
                adj[i][j] = true;
            }
        }
    }
    adj
}

pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in edges {
        if u != v {
            adj[u][v] = true;
            adj[v][u] = true;
        }
    }
    adj
}

pub fn edge_count(adj: &[Vec<bool>]) -> usize {
    let n = adj.len();
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| adj[i][j]).count()
}

/// Greedy that recomputes every residual degree from scratch each round.
/// Candidates are the uncovered nodes; the one with the most uncovered
/// neighbours wins, ties to the smallest index.
pub fn reference_greedy(adj: &[Vec<bool>]) -> Vec<usize> {
    let n = adj.len();
    let mut covered = vec![false; n];
    let mut chosen = Vec::new();
    while covered.iter().any(|c| !c) {
        let mut best: Option<(usize, usize)> = None;
        for v in 0..n {
            if covered[v] {
                continue;
            }
            let residual = (0..n).filter(|&u| adj[v][u] && !covered[u]).count();
            if best.is_none_or(|(_, r)| residual > r) {
                best = Some((v, residual));
            }
        }
        let (v, _) = best.expect("an uncovered node exists");
        chosen.push(v);
        covered[v] = true;
        for u in 0..n {
            if adj[v][u] {
                covered[u] = true;
            }
        }
    }
    chosen.sort_unstable();
    chosen
}

pub fn dominates(adj: &[Vec<bool>], set: &[usize]) -> bool {
    (0..adj.len()).all(|v| set.contains(&v) || set.iter().any(|&s| adj[s][v]))
}

/// Smallest dominating set size by trying every subset.
pub fn exhaustive_min_size(adj: &[Vec<bool>]) -> usize {
    let n = adj.len();
    assert!(n <= 20);
    (0u32..1 << n)
        .filter(|mask| {
            let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            dominates(adj, &set)
        })
        .map(u32::count_ones)
        .min()
        .unwrap_or(0) as usize
}

pub fn random_edges(n: usize, p: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// BM25 scores of every document with at least one query word, sorted by
/// descending score then ascending index.
pub fn naive_bm25(docs: &[&str], query: &str) -> Vec<(usize, f64)> {
    let (k1, b) = (1.2, 0.75);
    let toks: Vec<Vec<String>> = docs.iter().map(|d| words(d)).collect();
    let indexed: Vec<usize> = (0..docs.len()).filter(|&i| !toks[i].is_empty()).collect();
    let n = indexed.len() as f64;
    let avg = indexed.iter().map(|&i| toks[i].len() as f64).sum::<f64>() / n.max(1.0);
    let q = words(query);
    let mut out = Vec::new();
    for &i in &indexed {
        if !q.iter().any(|t| toks[i].contains(t)) {
            continue;
        }
        let mut score = 0.0;
        for t in &q {
            let tf = toks[i].iter().filter(|w| *w == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = indexed.iter().filter(|&&j| toks[j].contains(t)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * toks[i].len() as f64 / avg));
        }
        out.push((i, score));
    }
    out.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    out
}

/// Bag-of-words F1 with multiset overlap, max over golds.
pub fn bag_f1(pred: &str, golds: &[&str]) -> f64 {
    let p = words(pred);
    golds
        .iter()
        .map(|g| {
            let g = words(g);
            let mut pool: HashMap<&String, i64> = HashMap::new();
            for t in &g {
                *pool.entry(t).or_default() += 1;
            }
            let mut overlap = 0i64;
            for t in &p {
                if let Some(c) = pool.get_mut(t) {
                    if *c > 0 {
                        *c -= 1;
                        overlap += 1;
                    }
                }
            }
            if overlap == 0 {
                0.0
            } else {
                let precision = overlap as f64 / p.len() as f64;
                let recall = overlap as f64 / g.len() as f64;
                2.0 * precision * recall / (precision + recall)
            }
        })
        .fold(0.0, f64::max)
}

/// Zipf-distributed entity draws: P(rank r) ∝ 1 / r^s.
pub struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    pub fn new(n: usize, s: f64) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=n)
            .map(|r| {
                acc += 1.0 / (r as f64).powf(s);
                acc
            })
            .collect();
        for c in &mut cdf {
            *c /= acc;
        }
        Zipf { cdf }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}
