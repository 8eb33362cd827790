//! Canonical re-emission of a parsed function.
//!
//! Types are gone after parsing, so the printer writes placeholder types
//! (`i64`, `ptr`). The output parses back to a structurally equal
//! [`FunctionIR`]; it is not meant to be compiled.

use std::fmt::{self, Write};

use super::{FunctionIR, Instruction, InstructionKind, Operand};

fn ident(name: &str) -> String {
    if !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '$' | '.' | '_'))
    {
        name.to_string()
    } else {
        format!("\"{name}\"")
    }
}

fn value(op: &Operand) -> String {
    match op {
        Operand::Local(n) => format!("%{}", ident(n)),
        Operand::Global(n) => format!("@{}", ident(n)),
        Operand::Const(c) => c.clone(),
        Operand::Label(l) => format!("label %{}", ident(l)),
    }
}

fn typed(op: &Operand) -> String {
    match op {
        Operand::Label(_) => value(op),
        _ => format!("i64 {}", value(op)),
    }
}

fn join_typed(ops: &[Operand]) -> String {
    ops.iter().map(typed).collect::<Vec<_>>().join(", ")
}

fn render(inst: &Instruction) -> String {
    let ops = &inst.operands;
    let mut s = String::new();
    if let Some(r) = &inst.result {
        let _ = write!(s, "%{} = ", ident(r));
    }
    let op = inst.opcode.as_str();
    let body = match (inst.kind, op) {
        (InstructionKind::Alloca, _) => "alloca i64".to_string(),
        (InstructionKind::Load, _) => format!("load i64, ptr {}", value(&ops[0])),
        (InstructionKind::Store, _) => {
            format!("store {}, ptr {}", typed(&ops[0]), value(&ops[1]))
        }
        (_, "icmp") => format!("icmp eq {}, {}", typed(&ops[0]), value(&ops[1])),
        (_, "fcmp") => format!("fcmp oeq {}, {}", typed(&ops[0]), value(&ops[1])),
        (_, "fneg" | "freeze") => format!("{op} {}", typed(&ops[0])),
        (
            _,
            "trunc" | "zext" | "sext" | "fptrunc" | "fpext" | "fptoui" | "fptosi" | "uitofp"
            | "sitofp" | "ptrtoint" | "inttoptr" | "bitcast" | "addrspacecast",
        ) => format!("{op} {} to i64", typed(&ops[0])),
        (_, "getelementptr") => {
            let mut s = format!("getelementptr i8, ptr {}", value(&ops[0]));
            for o in &ops[1..] {
                let _ = write!(s, ", {}", typed(o));
            }
            s
        }
        (InstructionKind::Computation, _) => {
            format!("{op} {}, {}", typed(&ops[0]), value(&ops[1]))
        }
        (InstructionKind::Call, _) => {
            let labels: Vec<&Operand> = ops.iter().filter(|o| o.is_label()).collect();
            let ret = if inst.result.is_some() { "i64" } else { "void" };
            let mut s = format!(
                "{op} {ret} {}({})",
                value(&ops[0]),
                join_typed(inst.call_args())
            );
            if op == "invoke" && labels.len() == 2 {
                let _ = write!(
                    s,
                    " to {} unwind {}",
                    value(labels[0]),
                    value(labels[1])
                );
            }
            s
        }
        (InstructionKind::Branch, "br") => {
            if ops.len() == 1 {
                format!("br {}", value(&ops[0]))
            } else {
                format!("br i1 {}, {}, {}", value(&ops[0]), value(&ops[1]), value(&ops[2]))
            }
        }
        (InstructionKind::Branch, "switch") => {
            let mut s = format!("switch {}, {} [", typed(&ops[0]), value(&ops[1]));
            for (i, l) in ops[2..].iter().enumerate() {
                let _ = write!(s, " i64 {i}, {}", value(l));
            }
            s.push_str(" ]");
            s
        }
        (InstructionKind::Branch, _) => {
            let labels: Vec<String> = ops[1..].iter().map(value).collect();
            format!("{op} {}, [{}]", typed(&ops[0]), labels.join(", "))
        }
        (InstructionKind::Return, _) => match ops.first() {
            Some(v) => format!("ret {}", typed(v)),
            None => "ret void".into(),
        },
        (_, "unreachable" | "fence" | "landingpad") => op.to_string(),
        (_, "va_arg") => format!("va_arg {}, i64", typed(&ops[0])),
        (_, "atomicrmw") => format!("atomicrmw add {}, {}", typed(&ops[0]), typed(&ops[1])),
        (_, "cmpxchg") => format!("cmpxchg {}", join_typed(ops)),
        _ => {
            if ops.is_empty() {
                op.to_string()
            } else {
                format!("{op} {}", join_typed(ops))
            }
        }
    };
    s.push_str(&body);
    s
}

impl fmt::Display for FunctionIR {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self
            .parameters
            .iter()
            .map(|p| format!("i64 %{}", ident(p)))
            .collect();
        writeln!(f, "define i64 @{}({}) {{", ident(&self.name), params.join(", "))?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            writeln!(f, "{}:", ident(&b.label))?;
            for inst in &b.instructions {
                writeln!(f, "  {}", render(inst))?;
            }
        }
        writeln!(f, "}}")
    }
}
