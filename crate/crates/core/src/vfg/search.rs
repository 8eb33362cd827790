use crate::ir::{FunctionIR, InstRef, InstructionKind, Operand};

/// Walks the instruction-level CFG backwards from `site` and collects, per
/// backward path, the value of the nearest `store x, addr`.
///
/// Paths stop at the first matching store. Every instruction is visited at
/// most once, so loops terminate. The result is deduplicated and kept in
/// discovery order.
pub fn search_stored_values(addr: &Operand, site: InstRef, f: &FunctionIR) -> Vec<Operand> {
    let block_preds = f.predecessor_table();
    let preds_of = |(b, i): InstRef| -> Vec<InstRef> {
        if i > 0 {
            vec![(b, i - 1)]
        } else {
            block_preds[b]
                .iter()
                .map(|&p| (p, f.blocks[p].instructions.len() - 1))
                .collect()
        }
    };

    let mut visited = vec![Vec::new(); f.blocks.len()];
    for (b, block) in f.blocks.iter().enumerate() {
        visited[b] = vec![false; block.instructions.len()];
    }
    let mut found: Vec<Operand> = Vec::new();

    // Explicit stack emulating the recursive walk: (instruction, its
    // predecessors, next predecessor to try).
    let mut stack: Vec<(Vec<InstRef>, usize)> = vec![(preds_of(site), 0)];
    while let Some((preds, next)) = stack.last_mut() {
        let Some(&pre) = preds.get(*next) else {
            stack.pop();
            continue;
        };
        *next += 1;
        if visited[pre.0][pre.1] {
            continue;
        }
        visited[pre.0][pre.1] = true;
        let inst = f.instruction(pre);
        if inst.kind == InstructionKind::Store {
            if let Some((value, target)) = inst.store_parts() {
                if target == addr {
                    if !found.contains(value) {
                        found.push(value.clone());
                    }
                    continue;
                }
            }
        }
        stack.push((preds_of(pre), 0));
    }
    found
}
