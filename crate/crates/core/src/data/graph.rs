//! Thresholded full temporal causal graph with typed edges.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TtcdError};

/// One directed, lag-typed causal edge: `src` at `t - lag` -> `dst` at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub lag: usize,
    pub dst: String,
    pub weight: f64,
}

/// Binary full temporal causal graph.
///
/// Invariants, enforced at construction: no contemporaneous self edges,
/// duplicate-free edge set, lags within `max_lag`, and an acyclic
/// contemporaneous (lag-0) subgraph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalGraph {
    pub variables: Vec<String>,
    pub max_lag: usize,
    pub edges: Vec<Edge>,
}

impl TemporalGraph {
    pub fn new(variables: Vec<String>, max_lag: usize, mut edges: Vec<Edge>) -> Result<Self> {
        let index: HashMap<&str, usize> = variables
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        if index.len() != variables.len() {
            return Err(TtcdError::Domain("duplicate variable names".into()));
        }
        let mut seen = HashSet::new();
        for e in &edges {
            let si = *index.get(e.src.as_str()).ok_or_else(|| {
                TtcdError::Domain(format!("edge source '{}' is not a variable", e.src))
            })?;
            let di = *index.get(e.dst.as_str()).ok_or_else(|| {
                TtcdError::Domain(format!("edge target '{}' is not a variable", e.dst))
            })?;
            if e.lag > max_lag {
                return Err(TtcdError::Domain(format!(
                    "edge {} -> {} has lag {} > max_lag {}",
                    e.src, e.dst, e.lag, max_lag
                )));
            }
            if e.lag == 0 && si == di {
                return Err(TtcdError::Domain(format!(
                    "contemporaneous self edge on '{}'",
                    e.src
                )));
            }
            if !seen.insert((si, e.lag, di)) {
                return Err(TtcdError::Domain(format!(
                    "duplicate edge ({}, lag {}, {})",
                    e.src, e.lag, e.dst
                )));
            }
        }
        if !lag0_is_acyclic(&variables, &edges) {
            return Err(TtcdError::Domain(
                "contemporaneous (lag-0) subgraph contains a cycle".into(),
            ));
        }
        // canonical order for deterministic serialization
        edges.sort_by_key(|e| (index[e.src.as_str()], e.lag, index[e.dst.as_str()]));
        Ok(Self {
            variables,
            max_lag,
            edges,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge set as (src index, lag, dst index) triples.
    pub fn edge_triples(&self) -> HashSet<(usize, usize, usize)> {
        let index: HashMap<&str, usize> = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        self.edges
            .iter()
            .map(|e| (index[e.src.as_str()], e.lag, index[e.dst.as_str()]))
            .collect()
    }

    pub fn contains(&self, src: &str, lag: usize, dst: &str) -> bool {
        self.edges
            .iter()
            .any(|e| e.src == src && e.lag == lag && e.dst == dst)
    }

    /// Canonical JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: TemporalGraph = serde_json::from_str(text).map_err(|e| TtcdError::Parse {
            line: e.line(),
            msg: format!("{e}"),
        })?;
        // revalidate invariants on load
        Self::new(g.variables, g.max_lag, g.edges)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Graphviz DOT export: node ids `<name>_lag<l>`, lag columns grouped
    /// via `rank=same`, edge weights as labels rounded to 3 decimals.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph temporal_causal_graph {\n  rankdir=LR;\n");
        // lag columns from l_max down to 0 (current time on the right)
        for lag in (0..=self.max_lag).rev() {
            out.push_str(&format!("  {{ rank=same; // lag {lag}\n"));
            for v in &self.variables {
                out.push_str(&format!("    \"{v}_lag{lag}\";\n"));
            }
            out.push_str("  }\n");
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  \"{}_lag{}\" -> \"{}_lag0\" [label=\"{:.3}\"];\n",
                e.src, e.lag, e.dst, e.weight
            ));
        }
        out.push_str("}\n");
        out
    }

    pub fn save_dot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_dot())?;
        Ok(())
    }
}

/// Kahn's algorithm over the lag-0 edge subset.
fn lag0_is_acyclic(variables: &[String], edges: &[Edge]) -> bool {
    let index: HashMap<&str, usize> = variables
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let n = variables.len();
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_deg = vec![0usize; n];
    for e in edges.iter().filter(|e| e.lag == 0) {
        let (si, di) = (index[e.src.as_str()], index[e.dst.as_str()]);
        out_edges[si].push(di);
        in_deg[di] += 1;
    }
    let mut queue: Vec<usize> = (0..n).filter(|&v| in_deg[v] == 0).collect();
    let mut removed = 0usize;
    while let Some(v) = queue.pop() {
        removed += 1;
        for &d in &out_edges[v] {
            in_deg[d] -= 1;
            if in_deg[d] == 0 {
                queue.push(d);
            }
        }
    }
    removed == n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("X{i}")).collect()
    }

    fn edge(src: &str, lag: usize, dst: &str) -> Edge {
        Edge {
            src: src.into(),
            lag,
            dst: dst.into(),
            weight: 1.0,
        }
    }

    #[test]
    fn valid_graph_roundtrips_json() {
        let g = TemporalGraph::new(
            vars(3),
            2,
            vec![edge("X1", 0, "X2"), edge("X2", 1, "X3"), edge("X3", 2, "X3")],
        )
        .unwrap();
        let text = g.to_json();
        let g2 = TemporalGraph::from_json(&text).unwrap();
        assert_eq!(g2.edge_count(), 3);
        assert!(g2.contains("X2", 1, "X3"));
        assert_eq!(text, g2.to_json());
    }

    #[test]
    fn lag0_self_edge_rejected() {
        let err = TemporalGraph::new(vars(2), 1, vec![edge("X1", 0, "X1")]).unwrap_err();
        assert!(err.to_string().contains("self edge"), "{err}");
    }

    #[test]
    fn lag0_cycle_rejected() {
        let err = TemporalGraph::new(
            vars(3),
            1,
            vec![edge("X1", 0, "X2"), edge("X2", 0, "X3"), edge("X3", 0, "X1")],
        )
        .unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
        // lagged cycles are fine
        assert!(TemporalGraph::new(
            vars(2),
            1,
            vec![edge("X1", 0, "X2"), edge("X2", 1, "X1")],
        )
        .is_ok());
    }

    #[test]
    fn duplicates_rejected() {
        let err = TemporalGraph::new(
            vars(2),
            1,
            vec![edge("X1", 1, "X2"), edge("X1", 1, "X2")],
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn dot_contains_lagged_node_ids() {
        let g = TemporalGraph::new(vars(2), 1, vec![edge("X1", 1, "X2")]).unwrap();
        let dot = g.to_dot();
        assert!(dot.contains("\"X1_lag1\" -> \"X2_lag0\""));
        assert!(dot.contains("label=\"1.000\""));
    }

    #[test]
    fn serialization_is_canonical() {
        // same edges in different order serialize identically
        let a = TemporalGraph::new(vars(3), 1, vec![edge("X2", 0, "X3"), edge("X1", 1, "X2")])
            .unwrap();
        let b = TemporalGraph::new(vars(3), 1, vec![edge("X1", 1, "X2"), edge("X2", 0, "X3")])
            .unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}
