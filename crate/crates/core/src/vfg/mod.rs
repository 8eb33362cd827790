//! Variable-based flow graphs: nodes are variables, opcodes and block labels;
//! edges carry data or control dependencies.

mod build;
mod export;
mod search;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::IrError;

pub use build::{build_vfg, label_roles};
pub use export::{GraphFile, ParseGraphError};
pub use search::search_stored_values;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("operand %{operand} used in @{function} is never defined")]
    UnresolvedOperand { function: String, operand: String },
    #[error(transparent)]
    Ir(#[from] IrError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeOrigin {
    /// Named local (alloca) or global variable.
    Variable,
    /// Opcode occurrence, including the callee name of an external call.
    Opcode,
    /// Basic-block label identifier.
    #[serde(rename = "label")]
    LabelId,
    Parameter,
    Constant,
    /// Compiler temporary: an instruction result that is not an alloca.
    Register,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VfgNode {
    pub id: usize,
    pub label: String,
    pub origin: NodeOrigin,
    /// What the node stands for in the IR: `%name` / `@name` for values,
    /// the literal for constants, the block label for label nodes and
    /// `block#ordinal` for opcode occurrences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ident: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Data,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VfgEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

/// Edges are kept sorted by `(src, dst, kind)` and free of duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vfg {
    pub function_name: String,
    pub nodes: Vec<VfgNode>,
    pub edges: Vec<VfgEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub data_edge_count: usize,
    pub control_edge_count: usize,
    pub diameter: usize,
}

impl Vfg {
    pub fn new(function_name: impl Into<String>) -> Self {
        Vfg {
            function_name: function_name.into(),
            ..Default::default()
        }
    }

    /// Builds a graph from loose parts; edges are sorted and deduplicated
    /// and node ids rewritten to their positions.
    pub fn from_parts(
        function_name: impl Into<String>,
        nodes: Vec<VfgNode>,
        edges: impl IntoIterator<Item = VfgEdge>,
    ) -> Self {
        let mut nodes = nodes;
        for (i, n) in nodes.iter_mut().enumerate() {
            n.id = i;
        }
        let edges: BTreeSet<VfgEdge> = edges.into_iter().collect();
        Vfg {
            function_name: function_name.into(),
            nodes,
            edges: edges.into_iter().collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn out_edges(&self, id: usize) -> impl Iterator<Item = &VfgEdge> {
        self.edges.iter().filter(move |e| e.src == id)
    }

    pub fn in_edges(&self, id: usize) -> impl Iterator<Item = &VfgEdge> {
        self.edges.iter().filter(move |e| e.dst == id)
    }

    pub fn degree(&self, id: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.src == id || e.dst == id)
            .count()
    }

    pub fn find_by_ident(&self, ident: &str) -> Option<&VfgNode> {
        self.nodes.iter().find(|n| n.ident.as_deref() == Some(ident))
    }

    pub fn has_edge(&self, src: usize, dst: usize, kind: EdgeKind) -> bool {
        self.edges
            .binary_search(&VfgEdge { src, dst, kind })
            .is_ok()
    }

    /// Labelled edge list `(src label, dst label, kind)`, convenient for
    /// comparisons that should not depend on node ids.
    pub fn labeled_edges(&self) -> BTreeSet<(String, String, EdgeKind)> {
        self.edges
            .iter()
            .map(|e| {
                (
                    self.nodes[e.src].label.clone(),
                    self.nodes[e.dst].label.clone(),
                    e.kind,
                )
            })
            .collect()
    }

    /// Directed reachability closure from `src` (excluding `src` itself
    /// unless it lies on a cycle).
    pub fn reachable_from(&self, src: usize) -> Vec<bool> {
        let adj = self.successor_lists();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<usize> = adj[src].iter().copied().collect();
        while let Some(n) = queue.pop_front() {
            if !seen[n] {
                seen[n] = true;
                queue.extend(adj[n].iter().copied());
            }
        }
        seen
    }

    pub fn successor_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            if !adj[e.src].contains(&e.dst) {
                adj[e.src].push(e.dst);
            }
        }
        adj
    }
}

/// Node/edge counts plus the undirected diameter (longest finite shortest
/// path between any two nodes).
pub fn graph_stats(g: &Vfg) -> GraphStats {
    let n = g.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for e in &g.edges {
        if e.src != e.dst {
            adj[e.src].push(e.dst);
            adj[e.dst].push(e.src);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut diameter = 0;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            diameter = diameter.max(dist[u]);
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    GraphStats {
        node_count: n,
        data_edge_count: g.edges.iter().filter(|e| e.kind == EdgeKind::Data).count(),
        control_edge_count: g
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Control)
            .count(),
        diameter,
    }
}
