//! Seeded generator of small clang-style (allocas, numbered temporaries,
//! no phi) IR functions with arbitrary control flow, loops included.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARS: [&str; 3] = ["v0", "v1", "v2"];

struct Gen {
    rng: ChaCha8Rng,
    next: usize,
    out: String,
}

impl Gen {
    fn fresh(&mut self) -> String {
        let r = format!("%{}", self.next);
        self.next += 1;
        r
    }

    fn operand(&mut self, regs: &[String]) -> String {
        match self.rng.gen_range(0..4) {
            0 if !regs.is_empty() => regs.choose(&mut self.rng).unwrap().clone(),
            0 | 1 => ["%a", "%b"].choose(&mut self.rng).unwrap().to_string(),
            2 if !regs.is_empty() => regs.last().unwrap().clone(),
            _ => self.rng.gen_range(0..4).to_string(),
        }
    }

    fn line(&mut self, s: &str) {
        self.out.push_str("  ");
        self.out.push_str(s);
        self.out.push('\n');
    }

    /// Straight-line body; returns the i32 registers defined.
    fn body(&mut self, regs: &mut Vec<String>) {
        for _ in 0..self.rng.gen_range(0..6) {
            let var = *VARS.choose(&mut self.rng).unwrap();
            match self.rng.gen_range(0..8) {
                0 | 1 => {
                    let v = self.operand(regs);
                    self.line(&format!("store i32 {v}, i32* %{var}, align 4"));
                }
                2 | 3 => {
                    let r = self.fresh();
                    self.line(&format!("{r} = load i32, i32* %{var}, align 4"));
                    regs.push(r);
                }
                4 => {
                    let (x, y) = (self.operand(regs), self.operand(regs));
                    let op = *["add nsw", "sub nsw", "mul nsw", "xor"].choose(&mut self.rng).unwrap();
                    let r = self.fresh();
                    self.line(&format!("{r} = {op} i32 {x}, {y}"));
                    regs.push(r);
                }
                5 => {
                    let x = self.operand(regs);
                    let w = self.fresh();
                    self.line(&format!("{w} = sext i32 {x} to i64"));
                    let t = self.fresh();
                    self.line(&format!("{t} = trunc i64 {w} to i32"));
                    regs.push(t);
                }
                6 => {
                    let p = self.fresh();
                    self.line(&format!("{p} = getelementptr inbounds i32, i32* %{var}, i64 0"));
                    let r = self.fresh();
                    self.line(&format!("{r} = load i32, i32* {p}, align 4"));
                    regs.push(r);
                }
                _ => {
                    let x = self.operand(regs);
                    if self.rng.gen_bool(0.5) {
                        let r = self.fresh();
                        self.line(&format!("{r} = call i32 @ext(i32 {x})"));
                        regs.push(r);
                    } else {
                        self.line(&format!("call void @sink(i32 {x})"));
                    }
                }
            }
        }
    }
}

/// A module holding one function `@r` with `1..=max_blocks` blocks.
pub fn random_function(seed: u64, max_blocks: usize) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        next: 0,
        out: String::new(),
    };
    let n = g.rng.gen_range(1..=max_blocks);
    g.out.push_str("define i32 @r(i32 %a, i32 %b, i1 %c) {\n");
    for b in 0..n {
        g.out.push_str(&format!("b{b}:\n"));
        let mut regs = Vec::new();
        if b == 0 {
            for v in VARS {
                g.line(&format!("%{v} = alloca i32, align 4"));
            }
            if g.rng.gen_bool(0.7) {
                g.line("store i32 %a, i32* %v0, align 4");
            }
        }
        g.body(&mut regs);
        let last = b + 1 == n;
        let choice = if last { 0 } else { g.rng.gen_range(0..5) };
        match choice {
            0 => {
                let v = g.operand(&regs);
                g.line(&format!("ret i32 {v}"));
            }
            1 => {
                let t = g.rng.gen_range(1..n);
                g.line(&format!("br label %b{t}"));
            }
            _ => {
                let cond = if regs.is_empty() || g.rng.gen_bool(0.3) {
                    "%c".to_string()
                } else {
                    let x = g.operand(&regs);
                    let r = g.fresh();
                    g.line(&format!("{r} = icmp slt i32 {x}, 2"));
                    r
                };
                let (t, e) = (g.rng.gen_range(1..n), g.rng.gen_range(1..n));
                g.line(&format!("br i1 {cond}, label %b{t}, label %b{e}"));
            }
        }
    }
    g.out.push_str("}\n\ndeclare i32 @ext(i32)\n\ndeclare void @sink(i32)\n");
    g.out
}
