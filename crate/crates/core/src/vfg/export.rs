//! JSON and DOT renderings of a [`Vfg`].

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EdgeKind, Vfg, VfgEdge, VfgNode};
use crate::ir::{parse_module, FunctionIR};

#[derive(Debug, Error)]
pub enum ParseGraphError {
    #[error("malformed graph JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("edge {src}->{dst} references a missing node")]
    DanglingEdge { src: usize, dst: usize },
    #[error("node ids must be dense and ordered; found {found} at position {position}")]
    NodeIds { position: usize, found: usize },
    #[error("embedded IR is invalid: {0}")]
    Ir(#[from] crate::ir::IrError),
}

/// On-disk graph: `{"function", "nodes", "edges"}` plus the function's IR
/// so that later passes that need the CFG can recover it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub function: String,
    pub nodes: Vec<VfgNode>,
    pub edges: Vec<VfgEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ir: Option<String>,
}

impl GraphFile {
    pub fn new(g: &Vfg, f: Option<&FunctionIR>) -> Self {
        GraphFile {
            function: g.function_name.clone(),
            nodes: g.nodes.clone(),
            edges: g.edges.clone(),
            ir: f.map(|f| f.to_string()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ParseGraphError> {
        let file: GraphFile = serde_json::from_str(text)?;
        for (i, n) in file.nodes.iter().enumerate() {
            if n.id != i {
                return Err(ParseGraphError::NodeIds {
                    position: i,
                    found: n.id,
                });
            }
        }
        for e in &file.edges {
            if e.src >= file.nodes.len() || e.dst >= file.nodes.len() {
                return Err(ParseGraphError::DanglingEdge {
                    src: e.src,
                    dst: e.dst,
                });
            }
        }
        Ok(file)
    }

    pub fn graph(&self) -> Vfg {
        Vfg::from_parts(
            self.function.clone(),
            self.nodes.clone(),
            self.edges.iter().copied(),
        )
    }

    pub fn function_ir(&self) -> Result<Option<FunctionIR>, ParseGraphError> {
        match &self.ir {
            None => Ok(None),
            Some(text) => Ok(parse_module(text)?.functions.into_iter().next()),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl Vfg {
    /// Graphviz rendering: data edges solid blue, control edges dashed red.
    pub fn to_dot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph \"{}\" {{", escape(&self.function_name));
        let _ = writeln!(s, "  node [shape=box];");
        for n in &self.nodes {
            let _ = writeln!(s, "  n{} [label=\"{}\"];", n.id, escape(&n.label));
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::Data => "style=solid, color=blue",
                EdgeKind::Control => "style=dashed, color=red",
            };
            let _ = writeln!(s, "  n{} -> n{} [{}];", e.src, e.dst, style);
        }
        s.push_str("}\n");
        s
    }
}
