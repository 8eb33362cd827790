use std::collections::{BTreeSet, HashSet};

use super::lexer::{lex, strip_comment, Tok, Token};
use super::{classify, BasicBlock, FunctionIR, Instruction, IrError, Module, Operand};

const BASE_TYPES: &[&str] = &[
    "void", "half", "bfloat", "float", "double", "x86_fp80", "fp128", "ppc_fp128", "label",
    "metadata", "x86_mmx", "x86_amx", "token", "ptr", "opaque",
];

const VALUE_WORDS: &[&str] = &[
    "true",
    "false",
    "null",
    "undef",
    "poison",
    "zeroinitializer",
    "none",
];

const CONSTEXPR_WORDS: &[&str] = &[
    "getelementptr",
    "bitcast",
    "ptrtoint",
    "inttoptr",
    "addrspacecast",
    "trunc",
    "zext",
    "sext",
    "fptrunc",
    "fpext",
    "fptoui",
    "fptosi",
    "uitofp",
    "sitofp",
    "add",
    "sub",
    "mul",
    "shl",
    "lshr",
    "ashr",
    "and",
    "or",
    "xor",
    "icmp",
    "fcmp",
    "select",
    "extractvalue",
    "extractelement",
    "dso_local_equivalent",
    "no_cfi",
];

const BINOP_FLAGS: &[&str] = &[
    "nsw", "nuw", "exact", "disjoint", "fast", "nnan", "ninf", "nsz", "arcp", "contract", "afn",
    "reassoc",
];

fn is_int_type(w: &str) -> bool {
    w.len() > 1 && w.starts_with('i') && w[1..].chars().all(|c| c.is_ascii_digit())
}

fn is_type_word(w: &str) -> bool {
    is_int_type(w) || BASE_TYPES.contains(&w)
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
}

type PResult<T> = Result<T, IrError>;

impl<'a> Cursor<'a> {
    fn new(toks: &'a [Token], line: usize) -> Self {
        Cursor { toks, pos: 0, line }
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Tok> {
        self.toks.get(self.pos + n).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.tok);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn column(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| t.column)
            .unwrap_or(1)
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(IrError::Parse {
            line: self.line,
            column: self.column(),
            message: message.into(),
        })
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            self.error(format!("expected `{c}`"))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            self.error(format!("expected `{w}`"))
        }
    }

    /// Skips a balanced bracket group starting at the current opener and
    /// returns the skipped tokens (without the outer brackets).
    fn skip_group(&mut self) -> PResult<&'a [Token]> {
        let open = match self.peek() {
            Some(Tok::Punct(c @ ('(' | '[' | '{' | '<'))) => *c,
            _ => return self.error("expected bracket group"),
        };
        let start = self.pos + 1;
        let mut depth = 0i32;
        while let Some(t) = self.next() {
            match t {
                Tok::Punct('(' | '[' | '{' | '<') => depth += 1,
                Tok::Punct(')' | ']' | '}' | '>') => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(&self.toks[start..self.pos - 1]);
                    }
                }
                _ => {}
            }
        }
        self.error(format!("unbalanced `{open}`"))
    }

    fn parse_type(&mut self) -> PResult<()> {
        match self.peek() {
            Some(Tok::Word(w)) if is_type_word(w) => {
                let is_ptr = w == "ptr";
                self.pos += 1;
                if is_ptr && self.is_word("addrspace") {
                    self.pos += 1;
                    self.skip_group()?;
                }
            }
            Some(Tok::Local(_)) => self.pos += 1,
            Some(Tok::Punct('[' | '{')) => {
                self.skip_group()?;
            }
            Some(Tok::Punct('<')) => {
                self.skip_group()?;
            }
            _ => return self.error("expected type"),
        }
        loop {
            if self.eat_punct('*') {
                continue;
            }
            if self.is_word("addrspace") && self.peek_at(1) == Some(&Tok::Punct('(')) {
                self.pos += 1;
                self.skip_group()?;
                continue;
            }
            if self.is_punct('(') {
                // function type parameter list
                self.skip_group()?;
                continue;
            }
            break;
        }
        Ok(())
    }

    /// Skips parameter/return attributes sitting between a type and a value.
    fn skip_attributes(&mut self) -> PResult<()> {
        loop {
            match self.peek() {
                Some(Tok::Word(w))
                    if !VALUE_WORDS.contains(&w.as_str())
                        && !CONSTEXPR_WORDS.contains(&w.as_str())
                        && w != "blockaddress"
                        && w != "asm" =>
                {
                    let is_align = w == "align";
                    self.pos += 1;
                    if self.is_punct('(') {
                        self.skip_group()?;
                    } else if is_align && matches!(self.peek(), Some(Tok::Number(_))) {
                        self.pos += 1;
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn parse_value(&mut self) -> PResult<Operand> {
        let tok = match self.peek() {
            Some(t) => t,
            None => return self.error("expected value"),
        };
        let op = match tok {
            Tok::Local(n) => {
                self.pos += 1;
                Operand::Local(n.clone())
            }
            Tok::Global(n) => {
                self.pos += 1;
                Operand::Global(n.clone())
            }
            Tok::Number(n) => {
                self.pos += 1;
                Operand::Const(n.clone())
            }
            Tok::Str(s) => {
                self.pos += 1;
                Operand::Const(s.clone())
            }
            Tok::Metadata(m) => {
                self.pos += 1;
                if self.is_punct('{') {
                    self.skip_group()?;
                }
                Operand::Const(format!("!{m}"))
            }
            Tok::Word(w) if VALUE_WORDS.contains(&w.as_str()) => {
                self.pos += 1;
                Operand::Const(w.clone())
            }
            Tok::Word(w) if w == "asm" => {
                return Err(IrError::UnsupportedConstruct {
                    line: self.line,
                    opcode: "asm".into(),
                })
            }
            Tok::Word(w) if CONSTEXPR_WORDS.contains(&w.as_str()) || w == "blockaddress" => {
                let w = w.clone();
                self.pos += 1;
                while matches!(self.peek(), Some(Tok::Word(_))) {
                    self.pos += 1;
                }
                let inner = self.skip_group()?;
                // `to <type>` suffix of cast expressions sits inside the group.
                let base = inner.iter().find_map(|t| match &t.tok {
                    Tok::Global(g) => Some(g.clone()),
                    _ => None,
                });
                match base {
                    Some(g) if w != "blockaddress" => Operand::Global(g),
                    _ => Operand::Const(w),
                }
            }
            Tok::Punct('{' | '[' | '<') => {
                let inner = self.skip_group()?;
                Operand::Const(render_tokens(inner, tok))
            }
            _ => return self.error("expected value"),
        };
        Ok(op)
    }

    fn parse_typed_value(&mut self) -> PResult<Operand> {
        self.parse_type()?;
        self.skip_attributes()?;
        self.parse_value()
    }

    fn parse_label(&mut self) -> PResult<Operand> {
        self.expect_word("label")?;
        match self.next() {
            Some(Tok::Local(l)) => Ok(Operand::Label(l.clone())),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.error("expected label identifier")
            }
        }
    }

    /// True when the remaining tokens are only trailing `, !md !N` attachments
    /// or `, align N` style suffixes.
    fn at_suffix(&self) -> bool {
        match (self.peek(), self.peek_at(1)) {
            (None, _) => true,
            (Some(Tok::Punct(',')), Some(Tok::Metadata(_))) => true,
            (Some(Tok::Punct(',')), Some(Tok::Word(w))) => matches!(
                w.as_str(),
                "align" | "inrange" | "addrspace" | "syncscope" | "volatile"
            ) && w != "inrange",
            (Some(Tok::AttrGroup(_)), _) => true,
            _ => false,
        }
    }
}

fn render_tokens(inner: &[Token], open: &Tok) -> String {
    let (l, r) = match open {
        Tok::Punct('{') => ("{", "}"),
        Tok::Punct('[') => ("[", "]"),
        _ => ("<", ">"),
    };
    let body: Vec<String> = inner
        .iter()
        .map(|t| match &t.tok {
            Tok::Local(n) => format!("%{n}"),
            Tok::Global(n) => format!("@{n}"),
            Tok::Word(w) | Tok::Number(w) | Tok::Str(w) => w.clone(),
            Tok::Metadata(m) => format!("!{m}"),
            Tok::AttrGroup(g) => format!("#{g}"),
            Tok::Punct(c) => c.to_string(),
            Tok::Ellipsis => "...".into(),
        })
        .collect();
    format!("{l}{}{r}", body.join(" "))
}

enum Parsed {
    Inst {
        result: Option<String>,
        opcode: String,
        operands: Vec<Operand>,
    },
    /// Debug/lifetime intrinsics that carry no program semantics.
    Skip,
}

fn parse_instruction(toks: &[Token], line: usize) -> PResult<Parsed> {
    let mut c = Cursor::new(toks, line);
    let mut result = None;
    if let (Some(Tok::Local(name)), Some(Tok::Punct('='))) = (c.peek(), c.peek_at(1)) {
        result = Some(name.clone());
        c.pos += 2;
    }
    let mut opcode = match c.next() {
        Some(Tok::Word(w)) => w.clone(),
        _ => return c.error("expected opcode"),
    };
    if matches!(opcode.as_str(), "tail" | "musttail" | "notail") {
        opcode = match c.next() {
            Some(Tok::Word(w)) => w.clone(),
            _ => return c.error("expected call after tail marker"),
        };
    }
    let unsupported = |op: &str| {
        Err(IrError::UnsupportedConstruct {
            line,
            opcode: op.to_string(),
        })
    };
    let mut operands = Vec::new();
    match opcode.as_str() {
        "phi" | "select" | "callbr" => return unsupported(&opcode),
        "add" | "sub" | "mul" | "udiv" | "sdiv" | "urem" | "srem" | "fadd" | "fsub" | "fmul"
        | "fdiv" | "frem" | "shl" | "lshr" | "ashr" | "and" | "or" | "xor" => {
            while matches!(c.peek(), Some(Tok::Word(w)) if BINOP_FLAGS.contains(&w.as_str())) {
                c.pos += 1;
            }
            operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            operands.push(c.parse_value()?);
        }
        "fneg" | "freeze" => {
            while matches!(c.peek(), Some(Tok::Word(w)) if BINOP_FLAGS.contains(&w.as_str())) {
                c.pos += 1;
            }
            operands.push(c.parse_typed_value()?);
        }
        "icmp" | "fcmp" => {
            while matches!(c.peek(), Some(Tok::Word(w)) if BINOP_FLAGS.contains(&w.as_str())) {
                c.pos += 1;
            }
            match c.next() {
                Some(Tok::Word(_)) => {}
                _ => return c.error("expected comparison predicate"),
            }
            operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            operands.push(c.parse_value()?);
        }
        "trunc" | "zext" | "sext" | "fptrunc" | "fpext" | "fptoui" | "fptosi" | "uitofp"
        | "sitofp" | "ptrtoint" | "inttoptr" | "bitcast" | "addrspacecast" => {
            while matches!(c.peek(), Some(Tok::Word(w)) if BINOP_FLAGS.contains(&w.as_str())) {
                c.pos += 1;
            }
            operands.push(c.parse_typed_value()?);
            c.expect_word("to")?;
            c.parse_type()?;
        }
        "alloca" => {
            c.eat_word("inalloca");
            c.parse_type()?;
        }
        "load" => {
            c.eat_word("atomic");
            c.eat_word("volatile");
            c.parse_type()?;
            c.expect_punct(',')?;
            operands.push(c.parse_typed_value()?);
        }
        "store" => {
            c.eat_word("atomic");
            c.eat_word("volatile");
            operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            operands.push(c.parse_typed_value()?);
        }
        "getelementptr" => {
            c.eat_word("inbounds");
            c.parse_type()?;
            c.expect_punct(',')?;
            operands.push(c.parse_typed_value()?);
            while !c.at_suffix() {
                c.expect_punct(',')?;
                c.eat_word("inrange");
                operands.push(c.parse_typed_value()?);
            }
        }
        "call" | "invoke" => {
            // The callee is the first identifier directly followed by `(`.
            let mut depth = 0i32;
            let mut callee_at = None;
            let mut i = c.pos;
            while i < toks.len() {
                match &toks[i].tok {
                    Tok::Word(w) if w == "asm" && depth == 0 => return unsupported("asm"),
                    Tok::Punct('(' | '[' | '{' | '<') => depth += 1,
                    Tok::Punct(')' | ']' | '}' | '>') => depth -= 1,
                    Tok::Local(_) | Tok::Global(_)
                        if depth == 0
                            && matches!(toks.get(i + 1).map(|t| &t.tok), Some(Tok::Punct('('))) =>
                    {
                        callee_at = Some(i);
                        break;
                    }
                    _ => {}
                }
                i += 1;
            }
            let Some(at) = callee_at else {
                return c.error("could not locate callee");
            };
            c.pos = at;
            let callee = c.parse_value()?;
            if let Operand::Global(name) = &callee {
                if name.starts_with("llvm.dbg.") || name.starts_with("llvm.lifetime.") {
                    return Ok(Parsed::Skip);
                }
            }
            operands.push(callee);
            c.expect_punct('(')?;
            if !c.eat_punct(')') {
                loop {
                    operands.push(c.parse_typed_value()?);
                    if c.eat_punct(')') {
                        break;
                    }
                    c.expect_punct(',')?;
                }
            }
            if opcode == "invoke" {
                while !c.is_word("to") {
                    if c.next().is_none() {
                        return c.error("expected `to label` in invoke");
                    }
                }
                c.expect_word("to")?;
                operands.push(c.parse_label()?);
                c.expect_word("unwind")?;
                operands.push(c.parse_label()?);
            }
        }
        "br" => {
            if c.is_word("label") {
                operands.push(c.parse_label()?);
            } else {
                operands.push(c.parse_typed_value()?);
                c.expect_punct(',')?;
                operands.push(c.parse_label()?);
                c.expect_punct(',')?;
                operands.push(c.parse_label()?);
            }
        }
        "switch" => {
            operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            operands.push(c.parse_label()?);
            c.expect_punct('[')?;
            while !c.eat_punct(']') {
                c.parse_typed_value()?;
                c.expect_punct(',')?;
                operands.push(c.parse_label()?);
                if c.at_end() {
                    return c.error("unterminated switch table");
                }
            }
        }
        "indirectbr" => {
            operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            c.expect_punct('[')?;
            while !c.eat_punct(']') {
                operands.push(c.parse_label()?);
                c.eat_punct(',');
                if c.at_end() {
                    return c.error("unterminated indirectbr table");
                }
            }
        }
        "ret" => {
            if !c.eat_word("void") {
                operands.push(c.parse_typed_value()?);
            }
        }
        "unreachable" | "fence" | "landingpad" => {
            c.pos = toks.len();
        }
        "va_arg" => {
            operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            c.parse_type()?;
        }
        "extractvalue" | "resume" => {
            operands.push(c.parse_typed_value()?);
            c.pos = toks.len();
        }
        "insertvalue" => {
            operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            operands.push(c.parse_typed_value()?);
            c.pos = toks.len();
        }
        "atomicrmw" => {
            c.eat_word("volatile");
            match c.next() {
                Some(Tok::Word(_)) => {}
                _ => return c.error("expected atomicrmw operation"),
            }
            operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            operands.push(c.parse_typed_value()?);
            c.pos = toks.len();
        }
        "cmpxchg" => {
            c.eat_word("weak");
            c.eat_word("volatile");
            for i in 0..3 {
                if i > 0 {
                    c.expect_punct(',')?;
                }
                operands.push(c.parse_typed_value()?);
            }
            c.pos = toks.len();
        }
        _ => {
            // Generic form: a comma-separated list of typed values.
            while !c.at_suffix() {
                if !operands.is_empty() || c.is_punct(',') {
                    c.expect_punct(',')?;
                }
                operands.push(c.parse_typed_value()?);
            }
        }
    }
    if !c.at_suffix() {
        // Trailing `, align N`, metadata attachments and attribute groups.
        while let Some(t) = c.peek() {
            match t {
                Tok::Punct(',') | Tok::Metadata(_) | Tok::AttrGroup(_) | Tok::Number(_) => {
                    c.pos += 1
                }
                Tok::Word(_) => c.pos += 1,
                Tok::Punct('(' | '{' | '[') => {
                    c.skip_group()?;
                }
                _ => return c.error("unexpected trailing tokens"),
            }
        }
    }
    Ok(Parsed::Inst {
        result,
        opcode,
        operands,
    })
}

struct Header {
    name: String,
    params: Vec<Option<String>>,
}

fn parse_header(toks: &[Token], line: usize) -> PResult<Header> {
    let mut c = Cursor::new(toks, line);
    let at = toks
        .iter()
        .enumerate()
        .position(|(i, t)| {
            matches!(t.tok, Tok::Global(_))
                && matches!(toks.get(i + 1).map(|t| &t.tok), Some(Tok::Punct('(')))
        })
        .ok_or(IrError::Parse {
            line,
            column: 1,
            message: "function name not found".into(),
        })?;
    c.pos = at;
    let name = match c.next() {
        Some(Tok::Global(n)) => n.clone(),
        _ => unreachable!(),
    };
    c.expect_punct('(')?;
    let mut params = Vec::new();
    if !c.eat_punct(')') {
        loop {
            if c.peek() == Some(&Tok::Ellipsis) {
                c.pos += 1;
            } else {
                c.parse_type()?;
                c.skip_attributes()?;
                match c.peek() {
                    Some(Tok::Local(n)) => {
                        params.push(Some(n.clone()));
                        c.pos += 1;
                    }
                    _ => params.push(None),
                }
            }
            if c.eat_punct(')') {
                break;
            }
            c.expect_punct(',')?;
        }
    }
    Ok(Header { name, params })
}

fn label_of_line(line: &str) -> Option<String> {
    let t = line.trim();
    let body = t.strip_suffix(':')?;
    if let Some(q) = body.strip_prefix('"').and_then(|b| b.strip_suffix('"')) {
        return Some(q.to_string());
    }
    if !body.is_empty()
        && body
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '$' | '.' | '_'))
    {
        Some(body.to_string())
    } else {
        None
    }
}

struct RawInst {
    line: usize,
    result: Option<String>,
    opcode: String,
    operands: Vec<Operand>,
}

struct FnBuilder {
    header: Header,
    header_line: usize,
    blocks: Vec<(String, usize, Vec<RawInst>)>,
}

fn bracket_balance(s: &str) -> i32 {
    let mut in_str = false;
    let mut bal = 0;
    for c in s.chars() {
        match c {
            '"' => in_str = !in_str,
            '[' if !in_str => bal += 1,
            ']' if !in_str => bal -= 1,
            _ => {}
        }
    }
    bal
}

/// Parses a textual IR module.
pub fn parse_module(text: &str) -> Result<Module, IrError> {
    let mut module = Module::default();
    let mut current: Option<FnBuilder> = None;
    let mut header_acc: Option<(usize, String)> = None;
    let mut pending: Option<(usize, String)> = None;

    let lines: Vec<&str> = text.lines().collect();
    for (idx, raw) in lines.iter().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw);
        let trimmed = line.trim();

        if let Some((start, mut acc)) = header_acc.take() {
            acc.push(' ');
            acc.push_str(trimmed);
            if trimmed.ends_with('{') {
                current = Some(start_function(&acc, start)?);
            } else {
                header_acc = Some((start, acc));
            }
            continue;
        }

        if let Some(f) = current.as_mut() {
            if let Some((start, mut acc)) = pending.take() {
                acc.push(' ');
                acc.push_str(trimmed);
                if bracket_balance(&acc) > 0 {
                    pending = Some((start, acc));
                } else {
                    push_inst(f, &acc, start)?;
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            if trimmed == "}" {
                let done = current.take().unwrap();
                module.functions.push(finish_function(done)?);
                continue;
            }
            if let Some(label) = label_of_line(trimmed) {
                f.blocks.push((label, lineno, Vec::new()));
                continue;
            }
            if ["catch ", "filter ", "cleanup"]
                .iter()
                .any(|p| trimmed.starts_with(p))
            {
                continue;
            }
            if bracket_balance(trimmed) > 0 {
                pending = Some((lineno, trimmed.to_string()));
                continue;
            }
            push_inst(f, trimmed, lineno)?;
            continue;
        }

        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with("define ") {
            if trimmed.ends_with('{') {
                current = Some(start_function(trimmed, lineno)?);
            } else {
                header_acc = Some((lineno, trimmed.to_string()));
            }
        } else if trimmed.starts_with("declare ") {
            let toks = lex(trimmed, lineno)?;
            let h = parse_header(&toks, lineno)?;
            module.declarations.insert(h.name);
        } else if trimmed.starts_with('@') {
            let toks = lex(trimmed, lineno)?;
            if let Some(Tok::Global(g)) = toks.first().map(|t| &t.tok) {
                module.globals.insert(g.clone());
            }
        }
        // Everything else (target triple, attributes, metadata, type
        // definitions, comdats) carries nothing the graph needs.
    }
    if let Some(f) = current {
        return Err(IrError::Parse {
            line: f.header_line,
            column: 1,
            message: format!("function @{} is missing its closing brace", f.header.name),
        });
    }
    Ok(module)
}

fn start_function(header: &str, line: usize) -> PResult<FnBuilder> {
    let text = header.trim_end().trim_end_matches('{');
    let toks = lex(text, line)?;
    let header = parse_header(&toks, line)?;
    Ok(FnBuilder {
        header,
        header_line: line,
        blocks: Vec::new(),
    })
}

fn push_inst(f: &mut FnBuilder, text: &str, line: usize) -> PResult<()> {
    let toks = lex(text, line)?;
    match parse_instruction(&toks, line)? {
        Parsed::Skip => {}
        Parsed::Inst {
            result,
            opcode,
            operands,
        } => {
            if f.blocks.is_empty() {
                // Unlabeled entry block; LLVM numbers it after the unnamed
                // parameters.
                let unnamed = f
                    .header
                    .params
                    .iter()
                    .filter(|p| p.as_deref().is_none_or(|n| n.chars().all(|c| c.is_ascii_digit())))
                    .count();
                f.blocks.push((unnamed.to_string(), line, Vec::new()));
            }
            f.blocks.last_mut().unwrap().2.push(RawInst {
                line,
                result,
                opcode,
                operands,
            });
        }
    }
    Ok(())
}

fn finish_function(f: FnBuilder) -> PResult<FunctionIR> {
    let mut unnamed = 0usize;
    let parameters: Vec<String> = f
        .header
        .params
        .iter()
        .map(|p| match p {
            Some(n) => n.clone(),
            None => {
                let n = unnamed.to_string();
                unnamed += 1;
                n
            }
        })
        .collect();

    let mut defined: HashSet<String> = HashSet::new();
    for p in &parameters {
        if !defined.insert(p.clone()) {
            return Err(IrError::SsaViolation {
                line: f.header_line,
                name: p.clone(),
            });
        }
    }

    let labels: BTreeSet<String> = f.blocks.iter().map(|b| b.0.clone()).collect();
    if labels.len() != f.blocks.len() {
        return Err(IrError::Parse {
            line: f.header_line,
            column: 1,
            message: format!("duplicate block label in @{}", f.header.name),
        });
    }

    let mut blocks = Vec::with_capacity(f.blocks.len());
    for (label, label_line, raw) in f.blocks {
        let mut instructions = Vec::with_capacity(raw.len());
        for (ordinal, r) in raw.into_iter().enumerate() {
            if let Some(res) = &r.result {
                if !defined.insert(res.clone()) {
                    return Err(IrError::SsaViolation {
                        line: r.line,
                        name: res.clone(),
                    });
                }
            }
            for op in &r.operands {
                if let Operand::Label(l) = op {
                    if !labels.contains(l) {
                        return Err(IrError::Parse {
                            line: r.line,
                            column: 1,
                            message: format!("unknown label %{l}"),
                        });
                    }
                }
            }
            instructions.push(Instruction {
                kind: classify(&r.opcode),
                result: r.result,
                opcode: r.opcode,
                operands: r.operands,
                block: label.clone(),
                ordinal,
            });
        }
        let term = match instructions.last() {
            Some(t) if t.is_terminator() => t,
            _ => {
                return Err(IrError::Parse {
                    line: label_line,
                    column: 1,
                    message: format!("block %{label} does not end in a terminator"),
                })
            }
        };
        let mut successors: Vec<String> = Vec::new();
        for l in term.label_targets() {
            if !successors.iter().any(|s| s == l) {
                successors.push(l.to_string());
            }
        }
        blocks.push(BasicBlock {
            label,
            instructions,
            successors,
        });
    }
    if blocks.is_empty() {
        return Err(IrError::Parse {
            line: f.header_line,
            column: 1,
            message: format!("function @{} has no body", f.header.name),
        });
    }
    let entry = blocks[0].label.clone();
    Ok(FunctionIR {
        name: f.header.name,
        parameters,
        blocks,
        entry,
    })
}
