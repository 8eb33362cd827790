//! Independent reference implementations used as test oracles.

use std::collections::{BTreeSet, HashSet};

use ndarray::Array2;
use vfg_search::ir::{FunctionIR, InstRef, Operand};
use vfg_search::nn::{GraphInput, Model};
use vfg_search::vfg::{EdgeKind, Vfg};

fn predecessors(f: &FunctionIR, (b, i): InstRef) -> Vec<InstRef> {
    if i > 0 {
        return vec![(b, i - 1)];
    }
    let label = &f.blocks[b].label;
    f.blocks
        .iter()
        .enumerate()
        .filter(|(_, blk)| blk.successors.iter().any(|s| s == label))
        .map(|(p, blk)| (p, blk.instructions.len() - 1))
        .collect()
}

/// Values of the first `store _, addr` met on every acyclic backward path
/// from `site`, by explicit enumeration of those paths.
pub fn stores_on_backward_paths(f: &FunctionIR, addr: &Operand, site: InstRef) -> BTreeSet<Operand> {
    fn walk(f: &FunctionIR, addr: &Operand, at: InstRef, path: &mut HashSet<InstRef>, out: &mut BTreeSet<Operand>) {
        for p in predecessors(f, at) {
            if path.contains(&p) {
                continue;
            }
            let inst = f.instruction(p);
            if inst.opcode == "store" && &inst.operands[1] == addr {
                out.insert(inst.operands[0].clone());
                continue;
            }
            path.insert(p);
            walk(f, addr, p, path, out);
            path.remove(&p);
        }
    }
    let mut out = BTreeSet::new();
    let mut path = HashSet::from([site]);
    walk(f, addr, site, &mut path, &mut out);
    out
}

/// Reachability by repeated relaxation over the edge list (no adjacency
/// structure shared with the library).
pub fn reachable_pairs(g: &Vfg) -> BTreeSet<(usize, usize)> {
    let mut reach: BTreeSet<(usize, usize)> = g.edges.iter().map(|e| (e.src, e.dst)).collect();
    loop {
        let mut added = Vec::new();
        for &(a, b) in &reach {
            for e in g.edges.iter().filter(|e| e.src == b) {
                if !reach.contains(&(a, e.dst)) {
                    added.push((a, e.dst));
                }
            }
        }
        if added.is_empty() {
            return reach;
        }
        reach.extend(added);
    }
}

fn row_times(x: &[f64], w: &Array2<f64>, col0: usize, cols: usize) -> Vec<f64> {
    (0..cols)
        .map(|j| x.iter().enumerate().map(|(k, &v)| v * w[[k, col0 + j]]).sum())
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Node-by-node, loop-based evaluation of the graph encoder for a single
/// graph, reading parameters by name.
pub fn naive_graph_vector(m: &Model<f64>, g: &GraphInput) -> Vec<f64> {
    let p = |name: &str| &m.params.tensors[m.params.index_of(name).unwrap()];
    let (hd, n) = (m.config.hidden_dim, g.node_tokens.len());
    let embed = p("ir.embed");
    let mut h: Vec<Vec<f64>> = g
        .node_tokens
        .iter()
        .map(|toks| {
            let mut mean = vec![0.0; embed.ncols()];
            for &t in toks {
                for (k, v) in mean.iter_mut().enumerate() {
                    *v += embed[[t as usize, k]] / toks.len() as f64;
                }
            }
            row_times(&mean, p("ir.input"), 0, hd)
        })
        .collect();
    for _ in 0..m.config.ggnn_steps {
        let mut msg = vec![vec![0.0; hd]; n];
        for &(s, d, kind) in &g.edges {
            let (fwd, rev) = match kind {
                EdgeKind::Data => ("msg.data.fwd", "msg.data.rev"),
                EdgeKind::Control => ("msg.control.fwd", "msg.control.rev"),
            };
            let along = row_times(&h[s], p(fwd), 0, hd);
            msg[d].iter_mut().zip(along).for_each(|(a, b)| *a += b);
            if m.config.reverse_edges {
                let against = row_times(&h[d], p(rev), 0, hd);
                msg[s].iter_mut().zip(against).for_each(|(a, b)| *a += b);
            }
        }
        let (w, uzr, uh, b) = (p("gru.w"), p("gru.u_zr"), p("gru.u_h"), p("gru.b"));
        h = (0..n)
            .map(|v| {
                let x = row_times(&msg[v], w, 0, 3 * hd);
                let y = row_times(&h[v], uzr, 0, 2 * hd);
                let z: Vec<f64> = (0..hd).map(|j| sigmoid(x[j] + b[[0, j]] + y[j])).collect();
                let r: Vec<f64> = (0..hd).map(|j| sigmoid(x[hd + j] + b[[0, hd + j]] + y[hd + j])).collect();
                let rh: Vec<f64> = (0..hd).map(|j| r[j] * h[v][j]).collect();
                let c = row_times(&rh, uh, 0, hd);
                (0..hd)
                    .map(|j| {
                        let cand = (x[2 * hd + j] + b[[0, 2 * hd + j]] + c[j]).tanh();
                        (1.0 - z[j]) * h[v][j] + z[j] * cand
                    })
                    .collect()
            })
            .collect();
    }
    let (w, b, u) = (p("vfg.att.w"), p("vfg.att.b"), p("vfg.att.u"));
    let mut out = vec![0.0; hd];
    for hv in &h {
        let proj = row_times(hv, w, 0, hd);
        let score: f64 = (0..hd).map(|j| (proj[j] + b[[0, j]]) * u[[j, 0]]).sum();
        let alpha = sigmoid(score);
        out.iter_mut().zip(hv).for_each(|(o, x)| *o += alpha * x);
    }
    out
}
