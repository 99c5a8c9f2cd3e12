//! Run statistics and their table / JSON renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub nodes: u64,
    pub edges: u64,
    pub dominating_set: u64,
    pub training_samples: u64,
    pub entities: u64,
    pub max_degree: u64,
    /// `ln(max(Δ, 1)) + 2`.
    pub bound: f64,
    pub timings_ms: BTreeMap<String, u64>,
}

impl PipelineStats {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// The four headline counts as an aligned two-column table.
    pub fn table(&self) -> String {
        let rows = [
            ("# nodes", self.nodes),
            ("# edges", self.edges),
            ("# dominating set", self.dominating_set),
            ("# training samples", self.training_samples),
        ];
        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        let value_w = rows.iter().map(|(_, v)| v.to_string().len()).max().unwrap_or(0);
        let mut out = String::new();
        for (label, value) in rows {
            let _ = writeln!(out, "{label:<label_w$}  {value:>value_w$}");
        }
        out
    }
}
