//! Graph optimization: rename temporaries, drop trivial opcodes, drop
//! leftover registers, merge straight-line blocks.
//!
//! Every deletion bridges the removed node's predecessors to its
//! successors, so reachability between surviving nodes is preserved. A
//! bridged edge is `Data` if either half was `Data`, else `Control`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{FunctionIR, InstructionKind, Operand};
use crate::vfg::{EdgeKind, NodeOrigin, Vfg, VfgEdge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptStep {
    Rename,
    TrivialOpcodes,
    Registers,
    BlockMerge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptStats {
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub edges_before: usize,
    pub edges_after: usize,
    pub removed_by_step: BTreeMap<OptStep, usize>,
}

impl OptStats {
    pub fn nodes_removed(&self) -> usize {
        self.removed_by_step.values().sum()
    }
}

#[derive(Debug, Error)]
pub enum TrivialSetError {
    #[error("line {line}: unknown category `{name}`")]
    UnknownCategory { line: usize, name: String },
    #[error("line {line}: opcode listed before any [category] header")]
    NoCategory { line: usize },
}

/// Opcodes considered too trivial to keep as graph nodes, in three
/// families: memory access/addressing, type conversion and exception
/// handling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrivialOpcodeSet {
    pub memory: BTreeSet<String>,
    pub conversion: BTreeSet<String>,
    pub exception: BTreeSet<String>,
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for TrivialOpcodeSet {
    fn default() -> Self {
        TrivialOpcodeSet {
            memory: set(&["alloca", "load", "store", "getelementptr"]),
            conversion: set(&[
                "trunc", "zext", "sext", "fptrunc", "fpext", "fptoui", "fptosi", "uitofp",
                "sitofp", "ptrtoint", "inttoptr", "bitcast",
            ]),
            exception: set(&["landingpad", "resume", "unreachable", "cleanuppad", "catchpad"]),
        }
    }
}

impl TrivialOpcodeSet {
    pub fn contains(&self, opcode: &str) -> bool {
        self.memory.contains(opcode)
            || self.conversion.contains(opcode)
            || self.exception.contains(opcode)
    }

    /// Same set with `getelementptr` kept in the graph.
    pub fn keeping_getelementptr(mut self) -> Self {
        self.memory.remove("getelementptr");
        self
    }

    /// Parses a set file: `[memory]`, `[conversion]` and `[exception]`
    /// headers, each followed by one opcode per line. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TrivialSetError> {
        let mut out = TrivialOpcodeSet {
            memory: BTreeSet::new(),
            conversion: BTreeSet::new(),
            exception: BTreeSet::new(),
        };
        let mut current: Option<&mut BTreeSet<String>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(match name.trim() {
                    "memory" => &mut out.memory,
                    "conversion" => &mut out.conversion,
                    "exception" => &mut out.exception,
                    other => {
                        return Err(TrivialSetError::UnknownCategory {
                            line: i + 1,
                            name: other.to_string(),
                        })
                    }
                });
                continue;
            }
            match current.as_deref_mut() {
                Some(s) => {
                    s.insert(line.to_string());
                }
                None => return Err(TrivialSetError::NoCategory { line: i + 1 }),
            }
        }
        Ok(out)
    }
}

/// True for labels that are nothing but a number (`12`, `-3`, `2.5e+00`,
/// `0x3FF0...`).
pub fn is_numeric_label(label: &str) -> bool {
    let body = label.strip_prefix(['-', '+']).unwrap_or(label);
    if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        return !hex.is_empty() && hex.chars().all(|c| c.is_ascii_hexdigit());
    }
    body.starts_with(|c: char| c.is_ascii_digit() || c == '.') && body.parse::<f64>().is_ok()
}

/// Deletes the selected nodes one by one (ascending id), bridging each
/// node's predecessors to its successors, then compacts ids.
fn remove_bridging(g: &Vfg, remove: &[bool]) -> Vfg {
    let mut edges: BTreeSet<VfgEdge> = g.edges.iter().copied().collect();
    for (n, _) in remove.iter().enumerate().filter(|(_, r)| **r) {
        let ins: Vec<VfgEdge> = edges.iter().filter(|e| e.dst == n && e.src != n).copied().collect();
        let outs: Vec<VfgEdge> = edges.iter().filter(|e| e.src == n && e.dst != n).copied().collect();
        edges.retain(|e| e.src != n && e.dst != n);
        for i in &ins {
            for o in &outs {
                if i.src == o.dst {
                    continue;
                }
                let kind = if i.kind == EdgeKind::Data || o.kind == EdgeKind::Data {
                    EdgeKind::Data
                } else {
                    EdgeKind::Control
                };
                edges.insert(VfgEdge {
                    src: i.src,
                    dst: o.dst,
                    kind,
                });
            }
        }
    }
    compact(g, remove, edges)
}

fn compact(g: &Vfg, remove: &[bool], edges: BTreeSet<VfgEdge>) -> Vfg {
    let mut new_id = vec![usize::MAX; g.nodes.len()];
    let mut nodes = Vec::new();
    for (i, n) in g.nodes.iter().enumerate() {
        if !remove[i] {
            new_id[i] = nodes.len();
            nodes.push(n.clone());
        }
    }
    let edges = edges.into_iter().map(|e| VfgEdge {
        src: new_id[e.src],
        dst: new_id[e.dst],
        kind: e.kind,
    });
    Vfg::from_parts(g.function_name.clone(), nodes, edges)
}

/// Source-level variable name behind an address, if any: named allocas
/// (with clang's `.addr` suffix dropped), allocas whose first store is a
/// named parameter, and globals.
fn variable_names(f: &FunctionIR) -> HashMap<Operand, String> {
    let allocas = f.allocas();
    let mut names = HashMap::new();
    for a in &allocas {
        let op = Operand::Local(a.to_string());
        if !is_numeric_label(a) {
            let name = a.strip_suffix(".addr").unwrap_or(a);
            names.insert(op, name.to_string());
        }
    }
    for (_, inst) in f.instructions() {
        if let Some((value, addr)) = inst.store_parts() {
            match addr {
                Operand::Local(a) if allocas.contains(a.as_str()) && !names.contains_key(addr) => {
                    if let Operand::Local(v) = value {
                        if f.is_parameter(v) && !is_numeric_label(v) {
                            names.insert(addr.clone(), v.clone());
                        }
                    }
                }
                Operand::Global(g) => {
                    names.entry(addr.clone()).or_insert_with(|| g.clone());
                }
                _ => {}
            }
        }
        if let Some(Operand::Global(g)) = inst.load_address() {
            names
                .entry(Operand::Global(g.clone()))
                .or_insert_with(|| g.clone());
        }
    }
    names
}

/// Step 1: give temporaries the name of the source variable they are
/// stored to or loaded from. The k-th value stored to variable `v` is
/// called `v` for k = 0 and `v_k` afterwards. Renamed registers become
/// [`NodeOrigin::Variable`]; anything unresolvable is left as is.
pub fn rename_temporaries(g: &Vfg, f: &FunctionIR) -> Vfg {
    let names = variable_names(f);
    let by_ident: HashMap<&str, usize> = g
        .nodes
        .iter()
        .filter_map(|n| n.ident.as_deref().map(|i| (i, n.id)))
        .collect();
    let mut out = g.clone();
    let mut renamed = vec![false; g.nodes.len()];
    let mut version: HashMap<&Operand, usize> = HashMap::new();

    let rename = |out: &mut Vfg, renamed: &mut Vec<bool>, local: &str, name: String| {
        if let Some(&id) = by_ident.get(format!("%{local}").as_str()) {
            let node = &mut out.nodes[id];
            if node.origin == NodeOrigin::Register && !renamed[id] {
                node.label = name;
                node.origin = NodeOrigin::Variable;
                renamed[id] = true;
            }
        }
    };

    for (_, inst) in f.instructions() {
        if let Some((value, addr)) = inst.store_parts() {
            if let Some(v) = names.get(addr) {
                let k = version.entry(addr).or_insert(0);
                let name = if *k == 0 { v.clone() } else { format!("{v}_{k}") };
                *k += 1;
                if let Operand::Local(local) = value {
                    rename(&mut out, &mut renamed, local, name);
                }
            }
        }
    }
    for (_, inst) in f.instructions() {
        if inst.kind != InstructionKind::Load {
            continue;
        }
        if let (Some(addr), Some(r)) = (inst.load_address(), &inst.result) {
            if let Some(v) = names.get(addr) {
                rename(&mut out, &mut renamed, r, v.clone());
            }
        }
    }
    // Address-taken variables that appear as nodes themselves.
    for n in &mut out.nodes {
        if n.origin == NodeOrigin::Variable {
            if let Some(local) = n.ident.as_deref().and_then(|i| i.strip_prefix('%')) {
                if let Some(v) = names.get(&Operand::Local(local.to_string())) {
                    n.label = v.clone();
                }
            }
        }
    }
    out
}

/// Step 2: drop opcode nodes whose opcode is in `t`.
pub fn remove_trivial_opcodes(g: &Vfg, t: &TrivialOpcodeSet) -> Vfg {
    let remove: Vec<bool> = g
        .nodes
        .iter()
        .map(|n| n.origin == NodeOrigin::Opcode && t.contains(&n.label))
        .collect();
    remove_bridging(g, &remove)
}

/// Step 3: drop registers that step 1 could not name, together with any
/// remaining purely numeric value nodes.
pub fn remove_register_nodes(g: &Vfg) -> Vfg {
    let remove: Vec<bool> = g
        .nodes
        .iter()
        .map(|n| match n.origin {
            NodeOrigin::Register => true,
            NodeOrigin::Variable | NodeOrigin::Parameter | NodeOrigin::Constant => {
                is_numeric_label(&n.label)
            }
            NodeOrigin::Opcode | NodeOrigin::LabelId => false,
        })
        .collect();
    remove_bridging(g, &remove)
}

/// Step 4: for every CFG edge `a -> b` where `a` has a single successor
/// and `b` a single predecessor, fold `b`'s label node into `a`'s. Chains
/// collapse to one label node.
pub fn merge_isolated_blocks(g: &Vfg, f: &FunctionIR) -> Vfg {
    let succs = f.successor_table();
    let preds = f.predecessor_table();
    let n = f.blocks.len();
    // chain head for every block
    let mut merged_into: Vec<Option<usize>> = vec![None; n];
    for a in 0..n {
        if let [b] = succs[a][..] {
            if b != a && preds[b].len() == 1 {
                merged_into[b] = Some(a);
            }
        }
    }
    let head = |mut b: usize| {
        let mut steps = 0;
        while let Some(a) = merged_into[b] {
            b = a;
            steps += 1;
            if steps > n {
                break;
            }
        }
        b
    };
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for b in 0..n {
        groups.entry(head(b)).or_default().push(b);
    }

    let label_node: HashMap<&str, usize> = g
        .nodes
        .iter()
        .filter(|n| n.origin == NodeOrigin::LabelId)
        .filter_map(|n| n.ident.as_deref().map(|i| (i, n.id)))
        .collect();

    let mut out = g.clone();
    let mut target: Vec<usize> = (0..g.nodes.len()).collect();
    let mut remove = vec![false; g.nodes.len()];
    for (head_block, members) in &groups {
        let present: Vec<usize> = members
            .iter()
            .filter_map(|&b| label_node.get(f.blocks[b].label.as_str()).copied())
            .collect();
        let Some(&survivor) = label_node
            .get(f.blocks[*head_block].label.as_str())
            .or(present.first())
        else {
            continue;
        };
        out.nodes[survivor].ident = Some(f.blocks[*head_block].label.clone());
        for &node in &present {
            if node != survivor {
                target[node] = survivor;
                remove[node] = true;
            }
        }
    }
    let edges: BTreeSet<VfgEdge> = out
        .edges
        .iter()
        .map(|e| VfgEdge {
            src: target[e.src],
            dst: target[e.dst],
            kind: e.kind,
        })
        .filter(|e| e.src != e.dst)
        .collect();
    compact(&out, &remove, edges)
}

/// Runs steps 1 to 4 in order with the default trivial-opcode set.
pub fn optimize(g: &Vfg, f: &FunctionIR) -> (Vfg, OptStats) {
    optimize_with(g, f, &TrivialOpcodeSet::default())
}

pub fn optimize_with(g: &Vfg, f: &FunctionIR, t: &TrivialOpcodeSet) -> (Vfg, OptStats) {
    let mut removed = BTreeMap::new();
    let s1 = rename_temporaries(g, f);
    removed.insert(OptStep::Rename, g.node_count() - s1.node_count());
    let s2 = remove_trivial_opcodes(&s1, t);
    removed.insert(OptStep::TrivialOpcodes, s1.node_count() - s2.node_count());
    let s3 = remove_register_nodes(&s2);
    removed.insert(OptStep::Registers, s2.node_count() - s3.node_count());
    let s4 = merge_isolated_blocks(&s3, f);
    removed.insert(OptStep::BlockMerge, s3.node_count() - s4.node_count());
    let stats = OptStats {
        nodes_before: g.node_count(),
        nodes_after: s4.node_count(),
        edges_before: g.edges.len(),
        edges_after: s4.edges.len(),
        removed_by_step: removed,
    };
    (s4, stats)
}
