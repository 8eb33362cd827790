use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{search_stored_values, BuildError, EdgeKind, NodeOrigin, Vfg, VfgEdge, VfgNode};
use crate::ir::{FunctionIR, Instruction, InstructionKind, Operand};

/// Display text of each block's label node, keyed by block label.
///
/// Targets of a conditional branch become `label_true` / `label_false`,
/// switch targets `label_default` / `label_case`, and any other block plain
/// `label`. The first conditional terminator (in layout order) naming a block
/// decides its role.
pub fn label_roles(f: &FunctionIR) -> BTreeMap<String, String> {
    let mut roles: BTreeMap<String, String> = BTreeMap::new();
    for b in &f.blocks {
        let Some(term) = b.terminator() else { continue };
        if term.branch_condition().is_none() {
            continue;
        }
        let targets: Vec<&str> = term.label_targets().collect();
        for (i, t) in targets.iter().enumerate() {
            let role = match (term.opcode.as_str(), i) {
                ("br", 0) => "label_true",
                ("br", _) => "label_false",
                ("switch", 0) => "label_default",
                _ => "label_case",
            };
            roles
                .entry((*t).to_string())
                .or_insert_with(|| role.to_string());
        }
    }
    for b in &f.blocks {
        roles
            .entry(b.label.clone())
            .or_insert_with(|| "label".to_string());
    }
    roles
}

struct Builder<'f> {
    f: &'f FunctionIR,
    nodes: Vec<VfgNode>,
    edges: BTreeSet<VfgEdge>,
    values: HashMap<Operand, usize>,
    labels: HashMap<String, usize>,
    roles: BTreeMap<String, String>,
    defined: BTreeSet<&'f str>,
    allocas: BTreeSet<&'f str>,
    /// Results of recursive self-calls, standing for the returned values.
    recursive_results: BTreeSet<&'f str>,
    returned: Vec<&'f Operand>,
}

impl<'f> Builder<'f> {
    fn add_node(&mut self, label: String, origin: NodeOrigin, ident: String) -> usize {
        let id = self.nodes.len();
        self.nodes.push(VfgNode {
            id,
            label,
            origin,
            ident: Some(ident),
        });
        id
    }

    fn edge(&mut self, src: usize, dst: usize, kind: EdgeKind) {
        if src != dst {
            self.edges.insert(VfgEdge { src, dst, kind });
        }
    }

    fn value_node(&mut self, op: &Operand) -> Result<usize, BuildError> {
        if let Some(&id) = self.values.get(op) {
            return Ok(id);
        }
        let (label, origin, ident) = match op {
            Operand::Local(n) => {
                if !self.defined.contains(n.as_str()) {
                    return Err(BuildError::UnresolvedOperand {
                        function: self.f.name.clone(),
                        operand: n.clone(),
                    });
                }
                let origin = if self.f.is_parameter(n) {
                    NodeOrigin::Parameter
                } else if self.allocas.contains(n.as_str()) {
                    NodeOrigin::Variable
                } else {
                    NodeOrigin::Register
                };
                (n.clone(), origin, format!("%{n}"))
            }
            Operand::Global(n) => (n.clone(), NodeOrigin::Variable, format!("@{n}")),
            Operand::Const(c) => (c.clone(), NodeOrigin::Constant, c.clone()),
            Operand::Label(l) => return Ok(self.label_node(l)),
        };
        let id = self.add_node(label, origin, ident);
        self.values.insert(op.clone(), id);
        Ok(id)
    }

    fn label_node(&mut self, block: &str) -> usize {
        if let Some(&id) = self.labels.get(block) {
            return id;
        }
        let text = self
            .roles
            .get(block)
            .cloned()
            .unwrap_or_else(|| "label".to_string());
        let id = self.add_node(text, NodeOrigin::LabelId, block.to_string());
        self.labels.insert(block.to_string(), id);
        id
    }

    /// Nodes that stand for an operand's value. Results of recursive calls
    /// resolve to whatever feeds the function's returns.
    fn resolve(&mut self, op: &Operand) -> Result<Vec<usize>, BuildError> {
        if let Operand::Local(n) = op {
            if self.recursive_results.contains(n.as_str()) {
                let mut out = Vec::new();
                for r in self.returned.clone() {
                    let is_self = matches!(r, Operand::Local(x) if self.recursive_results.contains(x.as_str()));
                    if !is_self {
                        let id = self.value_node(r)?;
                        if !out.contains(&id) {
                            out.push(id);
                        }
                    }
                }
                return Ok(out);
            }
        }
        Ok(vec![self.value_node(op)?])
    }

    fn opcode_node(&mut self, label: &str, inst: &Instruction) -> usize {
        self.add_node(
            label.to_string(),
            NodeOrigin::Opcode,
            format!("{}#{}", inst.block, inst.ordinal),
        )
    }

    fn link(&mut self, srcs: &[usize], dst: usize, kind: EdgeKind) {
        for &s in srcs {
            self.edge(s, dst, kind);
        }
    }

    fn instruction(&mut self, bi: usize, ii: usize) -> Result<(), BuildError> {
        let f = self.f;
        let inst = &f.blocks[bi].instructions[ii];
        match inst.kind {
            InstructionKind::Alloca => {}
            InstructionKind::Load => {
                let addr = inst.load_address().expect("load has one operand");
                let mut sources = search_stored_values(addr, (bi, ii), f);
                if sources.is_empty() {
                    sources.push(addr.clone());
                }
                let mut src_nodes = Vec::new();
                for s in &sources {
                    src_nodes.extend(self.resolve(s)?);
                }
                if let Some(r) = &inst.result {
                    let dst = self.value_node(&Operand::Local(r.clone()))?;
                    self.link(&src_nodes, dst, EdgeKind::Data);
                }
            }
            InstructionKind::Store => {
                let (value, _) = inst.store_parts().expect("store has two operands");
                let stored = self.resolve(value)?;
                let label = self.label_node(&inst.block);
                for s in stored {
                    self.edge(label, s, EdgeKind::Control);
                }
            }
            InstructionKind::Call => {
                let callee = inst.callee().expect("call has a callee");
                let args = inst.call_args();
                if matches!(callee, Operand::Global(g) if *g == f.name) {
                    for (arg, param) in args.iter().zip(&f.parameters) {
                        let srcs = self.resolve(arg)?;
                        let p = self.value_node(&Operand::Local(param.clone()))?;
                        self.link(&srcs, p, EdgeKind::Data);
                    }
                    return Ok(());
                }
                let (name, extra) = match callee {
                    Operand::Global(g) => (g.clone(), None),
                    other => ("call".to_string(), Some(other.clone())),
                };
                let mut srcs = Vec::new();
                if let Some(fp) = &extra {
                    srcs.extend(self.resolve(fp)?);
                }
                for a in args {
                    srcs.extend(self.resolve(a)?);
                }
                let node = self.opcode_node(&name, inst);
                self.link(&srcs, node, EdgeKind::Data);
                match &inst.result {
                    Some(r) => {
                        let dst = self.value_node(&Operand::Local(r.clone()))?;
                        self.edge(node, dst, EdgeKind::Data);
                    }
                    None if srcs.is_empty() => {
                        let label = self.label_node(&inst.block);
                        self.edge(label, node, EdgeKind::Control);
                    }
                    None => {}
                }
            }
            InstructionKind::Branch => {
                if let Some(cond) = inst.branch_condition() {
                    let cond_nodes = self.resolve(cond)?;
                    let targets: Vec<String> =
                        f.blocks[bi].successors.to_vec();
                    for t in targets {
                        let l = self.label_node(&t);
                        self.link(&cond_nodes, l, EdgeKind::Control);
                    }
                }
            }
            InstructionKind::Return => {
                if let Some(v) = inst.operands.first() {
                    let srcs = self.resolve(v)?;
                    let node = self.opcode_node("ret", inst);
                    self.link(&srcs, node, EdgeKind::Data);
                }
            }
            InstructionKind::Computation | InstructionKind::Other => {
                let value_ops: Vec<&Operand> =
                    inst.operands.iter().filter(|o| !o.is_label()).collect();
                if value_ops.is_empty() && inst.result.is_none() {
                    return Ok(());
                }
                let mut srcs = Vec::new();
                for o in value_ops {
                    srcs.extend(self.resolve(o)?);
                }
                let node = self.opcode_node(&inst.opcode, inst);
                self.link(&srcs, node, EdgeKind::Data);
                if let Some(r) = &inst.result {
                    let dst = self.value_node(&Operand::Local(r.clone()))?;
                    self.edge(node, dst, EdgeKind::Data);
                }
            }
        }
        Ok(())
    }

    /// Chains the values stored to each address in layout order.
    fn chain_stores(&mut self) -> Result<(), BuildError> {
        let mut per_addr: Vec<(Operand, Vec<&'f Operand>)> = Vec::new();
        for (_, inst) in self.f.instructions() {
            if let Some((value, addr)) = inst.store_parts() {
                match per_addr.iter_mut().find(|(a, _)| a == addr) {
                    Some((_, vs)) => vs.push(value),
                    None => per_addr.push((addr.clone(), vec![value])),
                }
            }
        }
        for (_, values) in per_addr {
            for pair in values.windows(2) {
                let from = self.resolve(pair[0])?;
                let to = self.resolve(pair[1])?;
                for &a in &from {
                    for &b in &to {
                        self.edge(a, b, EdgeKind::Control);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds the flow graph of one function.
///
/// `module_functions` lists the functions defined in the same module. Each
/// function's graph is built on its own: only a call to `f` itself is
/// treated as recursion, and calls into sibling functions are handled like
/// external calls.
pub fn build_vfg(f: &FunctionIR, _module_functions: &BTreeSet<String>) -> Result<Vfg, BuildError> {
    let mut defined: BTreeSet<&str> = f.parameters.iter().map(String::as_str).collect();
    let mut recursive_results = BTreeSet::new();
    let mut returned = Vec::new();
    for (_, inst) in f.instructions() {
        if let Some(r) = &inst.result {
            defined.insert(r);
            if matches!(inst.callee(), Some(Operand::Global(g)) if *g == f.name) {
                recursive_results.insert(r.as_str());
            }
        }
        if inst.kind == InstructionKind::Return {
            if let Some(v) = inst.operands.first() {
                returned.push(v);
            }
        }
    }
    let mut b = Builder {
        f,
        nodes: Vec::new(),
        edges: BTreeSet::new(),
        values: HashMap::new(),
        labels: HashMap::new(),
        roles: label_roles(f),
        defined,
        allocas: f.allocas(),
        recursive_results,
        returned,
    };
    for (bi, block) in f.blocks.iter().enumerate() {
        for ii in 0..block.instructions.len() {
            b.instruction(bi, ii)?;
        }
    }
    b.chain_stores()?;
    Ok(Vfg {
        function_name: f.name.clone(),
        nodes: b.nodes,
        edges: b.edges.into_iter().collect(),
    })
}
