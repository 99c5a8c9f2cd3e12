//! Entity-coreference sentence graph stored as entity posting lists.
//!
//! Two sentences are adjacent iff they share at least one entity key. Every
//! entity therefore induces a clique over its posting list; those cliques are
//! never expanded. Neighborhoods are produced on demand by merging the
//! posting lists of a node's keys, and degrees are cached at build time.

use std::collections::{BinaryHeap, HashMap, HashSet};
use std::cmp::Reverse;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceId;
use crate::entities::EntityMention;
use crate::error::{Error, Result};

/// Compressed rows: `items[offsets[i]..offsets[i + 1]]` is row `i`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl Csr {
    fn row(&self, i: usize) -> &[u32] {
        &self.items[self.offsets[i]..self.offsets[i + 1]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceGraph {
    node_count: usize,
    /// Entity keys in ascending order; an entity's index is its position here.
    keys: Vec<String>,
    /// Entity index -> ascending sentence ids.
    postings: Csr,
    /// Sentence id -> ascending entity indices.
    node_keys: Csr,
    degrees: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: u64,
    pub entities: usize,
    pub max_degree: u32,
    pub isolated_nodes: usize,
}

impl SentenceGraph {
    /// Builds the graph from per-node mentions (indexed by sentence id).
    /// Keys in `stoplist` are ignored.
    pub fn build(mentions: &[Vec<EntityMention>], stoplist: &HashSet<String>) -> Self {
        let node_keys: Vec<Vec<&str>> = mentions
            .par_iter()
            .map(|ms| {
                ms.iter()
                    .map(|m| m.normalized_key.as_str())
                    .filter(|k| !stoplist.contains(*k))
                    .collect()
            })
            .collect();
        Self::from_node_keys(&node_keys)
    }

    /// Builds the graph from explicit key lists per node. Duplicate keys
    /// within a node collapse.
    pub fn from_node_keys<S: AsRef<str> + Sync>(node_keys: &[Vec<S>]) -> Self {
        let node_count = node_keys.len();
        let mut keys: Vec<&str> = node_keys
            .iter()
            .flat_map(|ks| ks.iter().map(|k| k.as_ref()))
            .collect();
        keys.par_sort_unstable();
        keys.dedup();
        let index: HashMap<&str, u32> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, i as u32))
            .collect();

        let per_node: Vec<Vec<u32>> = node_keys
            .par_iter()
            .map(|ks| {
                let mut ids: Vec<u32> = ks.iter().map(|k| index[k.as_ref()]).collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            })
            .collect();

        let mut nk_offsets = Vec::with_capacity(node_count + 1);
        nk_offsets.push(0);
        let mut nk_items = Vec::with_capacity(per_node.iter().map(Vec::len).sum());
        for ids in &per_node {
            nk_items.extend_from_slice(ids);
            nk_offsets.push(nk_items.len());
        }
        drop(per_node);
        let node_keys = Csr {
            offsets: nk_offsets,
            items: nk_items,
        };

        // Counting sort into postings; nodes are visited in ascending order so
        // every posting list comes out sorted.
        let mut counts = vec![0usize; keys.len() + 1];
        for &k in &node_keys.items {
            counts[k as usize + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let p_offsets = counts.clone();
        let mut cursor = counts;
        let mut p_items = vec![0u32; node_keys.items.len()];
        for v in 0..node_count {
            for &k in node_keys.row(v) {
                p_items[cursor[k as usize]] = v as u32;
                cursor[k as usize] += 1;
            }
        }
        let postings = Csr {
            offsets: p_offsets,
            items: p_items,
        };

        let mut graph = SentenceGraph {
            node_count,
            keys: keys.into_iter().map(str::to_string).collect(),
            postings,
            node_keys,
            degrees: Vec::new(),
        };
        graph.degrees = (0..node_count)
            .into_par_iter()
            .map(|v| graph.merged_neighbors(v).count() as u32)
            .collect();
        graph
    }

    /// One two-node entity per edge. Mainly for tests and synthetic graphs.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut node_keys: Vec<Vec<String>> = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            if u == v {
                continue;
            }
            let (a, b) = (u.min(v), u.max(v));
            let key = format!("edge:{a}:{b}");
            node_keys[a].push(key.clone());
            node_keys[b].push(key);
        }
        Self::from_node_keys(&node_keys)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn entity_count(&self) -> usize {
        self.keys.len()
    }

    pub fn entity_key(&self, entity: usize) -> &str {
        &self.keys[entity]
    }

    pub fn entity_index(&self, key: &str) -> Option<usize> {
        self.keys.binary_search_by(|k| k.as_str().cmp(key)).ok()
    }

    pub fn posting(&self, entity: usize) -> &[SentenceId] {
        self.postings.row(entity)
    }

    pub fn postings_by_key(&self, key: &str) -> Option<&[SentenceId]> {
        self.entity_index(key).map(|e| self.posting(e))
    }

    /// Entity indices of a node, ascending.
    pub fn node_entities(&self, v: usize) -> &[u32] {
        self.node_keys.row(v)
    }

    pub fn node_key_strings(&self, v: usize) -> impl Iterator<Item = &str> {
        self.node_entities(v).iter().map(|&e| self.keys[e as usize].as_str())
    }

    /// Sum of posting list lengths.
    pub fn total_postings(&self) -> usize {
        self.postings.items.len()
    }

    /// Bytes held on the heap by the graph's own buffers.
    pub fn heap_bytes(&self) -> usize {
        let csr = |c: &Csr| c.offsets.capacity() * size_of::<usize>() + c.items.capacity() * size_of::<u32>();
        let keys: usize = self.keys.iter().map(String::capacity).sum::<usize>() + self.keys.capacity() * size_of::<String>();
        csr(&self.postings) + csr(&self.node_keys) + keys + self.degrees.capacity() * size_of::<u32>()
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn degree(&self, v: usize) -> u32 {
        self.degrees[v]
    }

    pub fn max_degree(&self) -> u32 {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.node_count {
            return Err(Error::Argument(format!(
                "node {v} out of range (graph has {} nodes)",
                self.node_count
            )));
        }
        Ok(())
    }

    /// Ascending neighbor ids of `v`, without `v` itself.
    pub fn neighbors(&self, v: usize) -> Result<Vec<SentenceId>> {
        self.check_node(v)?;
        Ok(self.merged_neighbors(v).collect())
    }

    pub(crate) fn merged_neighbors(&self, v: usize) -> MergeUnion<'_> {
        let lists = self
            .node_entities(v)
            .iter()
            .map(|&e| self.postings.row(e as usize))
            .collect();
        MergeUnion::new(lists, v as u32)
    }

    pub fn adjacent(&self, u: usize, v: usize) -> Result<bool> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Ok(false);
        }
        let (a, b) = (self.node_entities(u), self.node_entities(v));
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return Ok(true),
            }
        }
        Ok(false)
    }

    /// Number of undirected edges, from cached degrees.
    pub fn edge_count(&self) -> u64 {
        self.degrees.iter().map(|&d| d as u64).sum::<u64>() / 2
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            nodes: self.node_count,
            edges: self.edge_count(),
            entities: self.keys.len(),
            max_degree: self.max_degree(),
            isolated_nodes: self.degrees.iter().filter(|&&d| d == 0).count(),
        }
    }

    /// Entities none of whose sentences are in `selected`.
    pub fn uncovered_entities(&self, selected: &[SentenceId]) -> usize {
        let mut chosen = vec![false; self.node_count];
        for &s in selected {
            if let Some(c) = chosen.get_mut(s as usize) {
                *c = true;
            }
        }
        (0..self.keys.len())
            .filter(|&e| !self.posting(e).iter().any(|&s| chosen[s as usize]))
            .count()
    }

    /// JSON Lines `{"entity": key, "sentences": [ids…]}`, one per entity in key order.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (e, key) in self.keys.iter().enumerate() {
            let rec = DumpRecord {
                entity: key.clone(),
                sentences: self.posting(e).to_vec(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Rebuilds a graph from a dump. The dump does not record isolated
    /// nodes, so the node count is passed in.
    pub fn read_dump<R: BufRead>(input: R, node_count: usize, origin: &Path) -> Result<Self> {
        let mut node_keys: Vec<Vec<String>> = vec![Vec::new(); node_count];
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DumpRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(origin, i + 1, e))?;
            for s in rec.sentences {
                let slot = node_keys.get_mut(s as usize).ok_or_else(|| {
                    Error::parse(
                        origin,
                        i + 1,
                        format!("sentence {s} out of range ({node_count} nodes)"),
                    )
                })?;
                slot.push(rec.entity.clone());
            }
        }
        Ok(Self::from_node_keys(&node_keys))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpRecord {
    entity: String,
    sentences: Vec<SentenceId>,
}

/// k-way merge over ascending posting lists yielding each id once,
/// skipping one excluded id.
pub(crate) struct MergeUnion<'a> {
    lists: Vec<&'a [u32]>,
    heap: BinaryHeap<Reverse<(u32, usize)>>,
    single: Option<std::slice::Iter<'a, u32>>,
    last: Option<u32>,
    exclude: u32,
}

impl<'a> MergeUnion<'a> {
    fn new(lists: Vec<&'a [u32]>, exclude: u32) -> Self {
        if lists.len() == 1 {
            return MergeUnion {
                single: Some(lists[0].iter()),
                lists: Vec::new(),
                heap: BinaryHeap::new(),
                last: None,
                exclude,
            };
        }
        let heap = lists
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.first().map(|&x| Reverse((x, i))))
            .collect();
        let cursors = lists;
        MergeUnion {
            lists: cursors,
            heap,
            single: None,
            last: None,
            exclude,
        }
    }
}

impl Iterator for MergeUnion<'_> {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        if let Some(it) = self.single.as_mut() {
            let exclude = self.exclude;
            return it.find(|&&x| x != exclude).copied();
        }
        while let Some(Reverse((x, i))) = self.heap.pop() {
            let rest = &self.lists[i][1..];
            self.lists[i] = rest;
            if let Some(&y) = rest.first() {
                self.heap.push(Reverse((y, i)));
            }
            if Some(x) == self.last || x == self.exclude {
                continue;
            }
            self.last = Some(x);
            return Some(x);
        }
        None
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        match &self.single {
            Some(it) => (it.len().saturating_sub(1), Some(it.len())),
            None => (0, Some(self.lists.iter().map(|l| l.len()).sum())),
        }
    }

    fn count(self) -> usize {
        match self.single {
            // A posting list contains the node it was reached from exactly once.
            Some(it) => it.len().saturating_sub(1),
            None => self.fold(0, |n, _| n + 1),
        }
    }
}
