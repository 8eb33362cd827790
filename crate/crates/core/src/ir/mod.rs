//! Structured view of textual LLVM IR.
//!
//! Only the pieces the flow-graph builder needs survive parsing: result
//! identifiers, opcodes, operand identifiers/constants/labels and the block
//! structure. Types, flags, attributes and metadata are read and dropped.

mod lexer;
mod parser;
mod print;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::parse_module;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported construct `{opcode}` at line {line}")]
    UnsupportedConstruct { line: usize, opcode: String },
    #[error("identifier %{name} defined twice (line {line})")]
    SsaViolation { line: usize, name: String },
    #[error("block `{0}` not found")]
    NotFound(String),
}

/// One instruction operand with its sigil resolved.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operand {
    /// `%name`, stored without the sigil.
    Local(String),
    /// `@name`, stored without the sigil.
    Global(String),
    /// Literal token: integers, floats, `true`, `null`, ...
    Const(String),
    /// Basic-block label referenced by a terminator.
    Label(String),
}

impl Operand {
    pub fn name(&self) -> &str {
        match self {
            Operand::Local(s) | Operand::Global(s) | Operand::Const(s) | Operand::Label(s) => s,
        }
    }

    pub fn is_label(&self) -> bool {
        matches!(self, Operand::Label(_))
    }

    pub fn as_local(&self) -> Option<&str> {
        match self {
            Operand::Local(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstructionKind {
    Computation,
    Call,
    Load,
    Store,
    Alloca,
    Branch,
    Return,
    Other,
}

const COMPUTATION_OPCODES: &[&str] = &[
    "add", "sub", "mul", "udiv", "sdiv", "urem", "srem", "fadd", "fsub", "fmul", "fdiv", "frem",
    "shl", "lshr", "ashr", "and", "or", "xor", "icmp", "fcmp", "fneg", "trunc", "zext", "sext",
    "fptrunc", "fpext", "fptoui", "fptosi", "uitofp", "sitofp", "ptrtoint", "inttoptr", "bitcast",
    "addrspacecast", "getelementptr",
];

/// Maps an opcode token onto the instruction family the graph builder
/// dispatches on. Unknown tokens fall back to [`InstructionKind::Other`].
pub fn classify(opcode: &str) -> InstructionKind {
    match opcode {
        "call" | "invoke" | "callbr" => InstructionKind::Call,
        "load" => InstructionKind::Load,
        "store" => InstructionKind::Store,
        "alloca" => InstructionKind::Alloca,
        "br" | "switch" | "indirectbr" => InstructionKind::Branch,
        "ret" => InstructionKind::Return,
        op if COMPUTATION_OPCODES.contains(&op) => InstructionKind::Computation,
        _ => InstructionKind::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub result: Option<String>,
    pub opcode: String,
    pub operands: Vec<Operand>,
    pub kind: InstructionKind,
    pub block: String,
    pub ordinal: usize,
}

impl Instruction {
    /// For calls: the callee operand. Arguments follow it.
    pub fn callee(&self) -> Option<&Operand> {
        (self.kind == InstructionKind::Call).then(|| self.operands.first()).flatten()
    }

    /// Call arguments (everything after the callee, labels excluded).
    pub fn call_args(&self) -> &[Operand] {
        if self.kind != InstructionKind::Call || self.operands.is_empty() {
            return &[];
        }
        let end = self
            .operands
            .iter()
            .position(Operand::is_label)
            .unwrap_or(self.operands.len());
        &self.operands[1..end]
    }

    /// `(value, address)` for a store.
    pub fn store_parts(&self) -> Option<(&Operand, &Operand)> {
        match (self.kind, self.operands.as_slice()) {
            (InstructionKind::Store, [v, a]) => Some((v, a)),
            _ => None,
        }
    }

    /// Address of a load.
    pub fn load_address(&self) -> Option<&Operand> {
        match (self.kind, self.operands.as_slice()) {
            (InstructionKind::Load, [a]) => Some(a),
            _ => None,
        }
    }

    /// Condition operand of a conditional branch or switch.
    pub fn branch_condition(&self) -> Option<&Operand> {
        if self.kind != InstructionKind::Branch {
            return None;
        }
        self.operands.first().filter(|o| !o.is_label())
    }

    pub fn label_targets(&self) -> impl Iterator<Item = &str> {
        self.operands.iter().filter_map(|o| match o {
            Operand::Label(l) => Some(l.as_str()),
            _ => None,
        })
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self.kind, InstructionKind::Branch | InstructionKind::Return)
            || matches!(
                self.opcode.as_str(),
                "invoke" | "callbr" | "unreachable" | "resume"
            )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub label: String,
    pub instructions: Vec<Instruction>,
    pub successors: Vec<String>,
}

impl BasicBlock {
    pub fn terminator(&self) -> Option<&Instruction> {
        self.instructions.last()
    }
}

/// Position of an instruction inside a function: `(block index, ordinal)`.
pub type InstRef = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionIR {
    pub name: String,
    pub parameters: Vec<String>,
    pub blocks: Vec<BasicBlock>,
    pub entry: String,
}

impl FunctionIR {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn block(&self, label: &str) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn instruction(&self, at: InstRef) -> &Instruction {
        &self.blocks[at.0].instructions[at.1]
    }

    pub fn instructions(&self) -> impl Iterator<Item = (InstRef, &Instruction)> {
        self.blocks.iter().enumerate().flat_map(|(bi, b)| {
            b.instructions
                .iter()
                .enumerate()
                .map(move |(ii, inst)| ((bi, ii), inst))
        })
    }

    /// Predecessor labels of `label`, ordered by block position.
    pub fn cfg_predecessors(&self, label: &str) -> Result<Vec<String>, IrError> {
        if self.block_index(label).is_none() {
            return Err(IrError::NotFound(label.to_string()));
        }
        Ok(self
            .blocks
            .iter()
            .filter(|b| b.successors.iter().any(|s| s == label))
            .map(|b| b.label.clone())
            .collect())
    }

    /// Predecessor block indices for every block, ordered by position.
    pub fn predecessor_table(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for (bi, b) in self.blocks.iter().enumerate() {
            for s in &b.successors {
                if let Some(si) = self.block_index(s) {
                    if !preds[si].contains(&bi) {
                        preds[si].push(bi);
                    }
                }
            }
        }
        for p in &mut preds {
            p.sort_unstable();
        }
        preds
    }

    pub fn successor_table(&self) -> Vec<Vec<usize>> {
        self.blocks
            .iter()
            .map(|b| {
                b.successors
                    .iter()
                    .filter_map(|s| self.block_index(s))
                    .collect()
            })
            .collect()
    }

    /// Result identifiers produced by `alloca`.
    pub fn allocas(&self) -> BTreeSet<&str> {
        self.instructions()
            .filter(|(_, i)| i.kind == InstructionKind::Alloca)
            .filter_map(|(_, i)| i.result.as_deref())
            .collect()
    }

    pub fn is_parameter(&self, name: &str) -> bool {
        self.parameters.iter().any(|p| p == name)
    }
}

pub fn cfg_predecessors(f: &FunctionIR, label: &str) -> Result<Vec<String>, IrError> {
    f.cfg_predecessors(label)
}

/// A parsed `.ll` file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Module {
    pub functions: Vec<FunctionIR>,
    /// Names of `declare`d external functions.
    pub declarations: BTreeSet<String>,
    /// Names of global variables and constants.
    pub globals: BTreeSet<String>,
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&FunctionIR> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn defined_names(&self) -> BTreeSet<String> {
        self.functions.iter().map(|f| f.name.clone()).collect()
    }
}

impl fmt::Display for InstructionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}
