//! Graph encoder (gated message passing + sigmoid attention pooling) and
//! query encoder (LSTM + softmax attention).
//!
//! Row-vector convention throughout: states are rows, layers compute
//! `h . W`. Message weights are indexed by edge type: data/control, each
//! along and against the edge direction.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::{NnError, Params, Real};
use crate::text::{split_identifier, Vocabulary, PAD, UNK};
use crate::vfg::{EdgeKind, Vfg};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub ggnn_steps: usize,
    /// Also pass messages against edge direction, with separate weights.
    pub reverse_edges: bool,
    pub max_query_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 300,
            hidden_dim: 512,
            ggnn_steps: 5,
            reverse_edges: true,
            max_query_len: 30,
        }
    }
}

pub const MESSAGE_PARAMS: [&str; 4] = ["msg.data.fwd", "msg.control.fwd", "msg.data.rev", "msg.control.rev"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ids {
    ir_embed: usize,
    ir_input: usize,
    msg: [usize; 4],
    gru_w: usize,
    gru_u_zr: usize,
    gru_u_h: usize,
    gru_b: usize,
    vfg_w: usize,
    vfg_b: usize,
    vfg_u: usize,
    q_embed: usize,
    lstm_w: usize,
    lstm_u: usize,
    lstm_b: usize,
    des_w: usize,
    des_b: usize,
    des_u: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
    ids: Ids,
}

fn glorot<R: Rng, T: Real>(rng: &mut R, rows: usize, cols: usize, fan: (usize, usize)) -> Array2<T> {
    let bound = (6.0 / (fan.0 + fan.1) as f64).sqrt();
    uniform(rng, rows, cols, bound)
}

fn uniform<R: Rng, T: Real>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Array2<T> {
    let d = Uniform::new_inclusive(-bound, bound);
    Array2::from_shape_simple_fn((rows, cols), || T::from_f64(d.sample(rng)).unwrap())
}

/// Random orthogonal `n x n` matrix: Gaussian columns, modified
/// Gram-Schmidt.
fn orthogonal<R: Rng, T: Real>(rng: &mut R, n: usize) -> Array2<T> {
    let mut m: Array2<f64> = Array2::from_shape_simple_fn((n, n), || StandardNormal.sample(rng));
    for j in 0..n {
        for k in 0..j {
            let proj = m.column(j).dot(&m.column(k));
            let ck = m.column(k).to_owned();
            m.column_mut(j).scaled_add(-proj, &ck);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        m.column_mut(j).mapv_inplace(|x| x / norm);
    }
    m.mapv(|x| T::from_f64(x).unwrap())
}

fn blocks<T: Real>(parts: Vec<Array2<T>>) -> Array2<T> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("equal row counts")
}

impl<T: Real> Model<T> {
    /// Fresh parameters: embedding tables and attention contexts uniform in
    /// [-0.1, 0.1], recurrent matrices orthogonal per gate, other weights
    /// Glorot-uniform, biases zero.
    pub fn new(config: ModelConfig, ir_vocab: usize, query_vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let mut p = Params::default();
        p.push("ir.embed", uniform(&mut rng, ir_vocab, e, 0.1));
        p.push("ir.input", glorot(&mut rng, e, h, (e, h)));
        for name in MESSAGE_PARAMS {
            p.push(name, glorot(&mut rng, h, h, (h, h)));
        }
        let gw = blocks((0..3).map(|_| glorot(&mut rng, h, h, (h, h))).collect());
        p.push("gru.w", gw);
        let uzr = blocks((0..2).map(|_| orthogonal(&mut rng, h)).collect());
        p.push("gru.u_zr", uzr);
        p.push("gru.u_h", orthogonal(&mut rng, h));
        p.push("gru.b", Array2::zeros((1, 3 * h)));
        p.push("vfg.att.w", glorot(&mut rng, h, h, (h, h)));
        p.push("vfg.att.b", Array2::zeros((1, h)));
        p.push("vfg.att.u", uniform(&mut rng, h, 1, 0.1));
        p.push("query.embed", uniform(&mut rng, query_vocab, e, 0.1));
        let lw = blocks((0..4).map(|_| glorot(&mut rng, e, h, (e, h))).collect());
        p.push("lstm.w", lw);
        let lu = blocks((0..4).map(|_| orthogonal(&mut rng, h)).collect());
        p.push("lstm.u", lu);
        p.push("lstm.b", Array2::zeros((1, 4 * h)));
        p.push("des.att.w", glorot(&mut rng, h, h, (h, h)));
        p.push("des.att.b", Array2::zeros((1, h)));
        p.push("des.att.u", uniform(&mut rng, h, 1, 0.1));
        Self::from_params(config, p).expect("freshly built parameters are complete")
    }

    /// Wraps existing parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: Params<T>) -> Result<Self, String> {
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let find = |name: &str, rows: Option<usize>, cols: usize| -> Result<usize, String> {
            let i = params
                .index_of(name)
                .ok_or_else(|| format!("missing tensor {name}"))?;
            let (r, c) = params.tensors[i].dim();
            if c != cols || rows.is_some_and(|rows| rows != r) {
                return Err(format!("tensor {name} has shape {r}x{c}"));
            }
            Ok(i)
        };
        let ids = Ids {
            ir_embed: find("ir.embed", None, e)?,
            ir_input: find("ir.input", Some(e), h)?,
            msg: [
                find(MESSAGE_PARAMS[0], Some(h), h)?,
                find(MESSAGE_PARAMS[1], Some(h), h)?,
                find(MESSAGE_PARAMS[2], Some(h), h)?,
                find(MESSAGE_PARAMS[3], Some(h), h)?,
            ],
            gru_w: find("gru.w", Some(h), 3 * h)?,
            gru_u_zr: find("gru.u_zr", Some(h), 2 * h)?,
            gru_u_h: find("gru.u_h", Some(h), h)?,
            gru_b: find("gru.b", Some(1), 3 * h)?,
            vfg_w: find("vfg.att.w", Some(h), h)?,
            vfg_b: find("vfg.att.b", Some(1), h)?,
            vfg_u: find("vfg.att.u", Some(h), 1)?,
            q_embed: find("query.embed", None, e)?,
            lstm_w: find("lstm.w", Some(e), 4 * h)?,
            lstm_u: find("lstm.u", Some(h), 4 * h)?,
            lstm_b: find("lstm.b", Some(1), 4 * h)?,
            des_w: find("des.att.w", Some(h), h)?,
            des_b: find("des.att.b", Some(1), h)?,
            des_u: find("des.att.u", Some(h), 1)?,
        };
        Ok(Model {
            config,
            params,
            ids,
        })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            ids: self.ids,
        }
    }

    /// Code vectors for a list of graphs, encoded in chunks.
    pub fn embed_graphs(&self, graphs: &[&GraphInput]) -> Array2<T> {
        let mut rows = Vec::new();
        for chunk in graphs.chunks(64) {
            let batch = GraphBatch::new(chunk);
            let mut tape = Tape::new(&self.params);
            let v = encode_graphs(&mut tape, self, &batch);
            rows.push(tape.value(v).clone());
        }
        stack_rows(rows, self.config.hidden_dim)
    }

    /// Description vectors for encoded queries.
    pub fn embed_queries(&self, queries: &[Vec<u32>]) -> Result<Array2<T>, NnError> {
        let mut rows = Vec::new();
        for chunk in queries.chunks(256) {
            let mut tape = Tape::new(&self.params);
            let q = encode_queries(&mut tape, self, chunk)?;
            rows.push(tape.value(q.vectors).clone());
        }
        Ok(stack_rows(rows, self.config.hidden_dim))
    }
}

fn stack_rows<T: Real>(rows: Vec<Array2<T>>, cols: usize) -> Array2<T> {
    if rows.is_empty() {
        return Array2::zeros((0, cols));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("equal widths")
}

/// One graph ready for encoding: sub-token ids per node and typed edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphInput {
    pub node_tokens: Vec<Vec<u32>>,
    pub edges: Vec<(usize, usize, EdgeKind)>,
}

impl GraphInput {
    /// Node labels are split into sub-tokens; a label with none maps to UNK.
    pub fn from_vfg(g: &Vfg, vocab: &Vocabulary) -> Self {
        let node_tokens = g
            .nodes
            .iter()
            .map(|n| {
                let ids: Vec<u32> = split_identifier(&n.label).iter().map(|t| vocab.id(t)).collect();
                if ids.is_empty() {
                    vec![UNK]
                } else {
                    ids
                }
            })
            .collect();
        let edges = g.edges.iter().map(|e| (e.src, e.dst, e.kind)).collect();
        GraphInput { node_tokens, edges }
    }
}

/// Several graphs packed into one disjoint union.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub node_tokens: Vec<Vec<u32>>,
    /// `(src, dst)` lists for data and control edges, batch-global ids.
    pub edges: [Vec<(usize, usize)>; 2],
    pub graph_of: Vec<usize>,
    pub graph_count: usize,
}

impl GraphBatch {
    pub fn new(graphs: &[&GraphInput]) -> Self {
        let mut b = GraphBatch {
            node_tokens: Vec::new(),
            edges: [Vec::new(), Vec::new()],
            graph_of: Vec::new(),
            graph_count: graphs.len(),
        };
        for (gi, g) in graphs.iter().enumerate() {
            let base = b.node_tokens.len();
            for &(s, d, k) in &g.edges {
                let slot = match k {
                    EdgeKind::Data => 0,
                    EdgeKind::Control => 1,
                };
                b.edges[slot].push((base + s, base + d));
            }
            b.node_tokens.extend(g.node_tokens.iter().cloned());
            b.graph_of.extend(std::iter::repeat_n(gi, g.node_tokens.len()));
        }
        b
    }

    pub fn node_count(&self) -> usize {
        self.node_tokens.len()
    }
}

/// `h0 = mean(sub-token embeddings) . W_in`.
pub fn init_node_states<T: Real>(tape: &mut Tape<'_, T>, m: &Model<T>, b: &GraphBatch) -> Var {
    let mut triples = Vec::new();
    for (i, toks) in b.node_tokens.iter().enumerate() {
        let w = T::one() / T::from_usize(toks.len()).unwrap();
        triples.extend(toks.iter().map(|&t| (i, t as usize, w)));
    }
    let table = tape.param(m.ids.ir_embed);
    let emb = tape.mix(table, b.node_count(), triples);
    let w_in = tape.param(m.ids.ir_input);
    tape.matmul(emb, w_in)
}

/// `steps` rounds of typed message passing, each followed by a GRU update.
pub fn run_ggnn<T: Real>(tape: &mut Tape<'_, T>, m: &Model<T>, b: &GraphBatch, h0: Var, steps: usize) -> Var {
    let n = b.node_count();
    let hd = m.config.hidden_dim;
    // (message weight, (dst, src, 1) gather triples) per edge type and direction
    type Typed<T> = Vec<(usize, Vec<(usize, usize, T)>)>;
    let mut typed: Typed<T> = Vec::new();
    for (slot, edges) in b.edges.iter().enumerate() {
        if edges.is_empty() {
            continue;
        }
        typed.push((m.ids.msg[slot], edges.iter().map(|&(s, d)| (d, s, T::one())).collect()));
        if m.config.reverse_edges {
            typed.push((m.ids.msg[slot + 2], edges.iter().map(|&(s, d)| (s, d, T::one())).collect()));
        }
    }
    let (gw, guzr, guh, gb) = (
        tape.param(m.ids.gru_w),
        tape.param(m.ids.gru_u_zr),
        tape.param(m.ids.gru_u_h),
        tape.param(m.ids.gru_b),
    );
    let mut h = h0;
    for _ in 0..steps {
        let mut msg: Option<Var> = None;
        for (pid, triples) in &typed {
            let agg = tape.mix(h, n, triples.clone());
            let w = tape.param(*pid);
            let part = tape.matmul(agg, w);
            msg = Some(match msg {
                Some(acc) => tape.add(acc, part),
                None => part,
            });
        }
        let msg = msg.unwrap_or_else(|| tape.constant(Array2::zeros((n, hd))));
        let x = tape.matmul(msg, gw);
        let x = tape.add_row(x, gb);
        let y = tape.matmul(h, guzr);
        let (xz, xr, xh) = (tape.slice_cols(x, 0, hd), tape.slice_cols(x, hd, hd), tape.slice_cols(x, 2 * hd, hd));
        let (yz, yr) = (tape.slice_cols(y, 0, hd), tape.slice_cols(y, hd, hd));
        let z = tape.add(xz, yz);
        let z = tape.sigmoid(z);
        let r = tape.add(xr, yr);
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h);
        let uh = tape.matmul(rh, guh);
        let cand = tape.add(xh, uh);
        let cand = tape.tanh(cand);
        // h' = h + z * (cand - h)
        let delta = tape.sub(cand, h);
        let step = tape.mul(z, delta);
        h = tape.add(h, step);
    }
    h
}

/// Per-node weights `sigmoid((h W + b) . u)` and per-graph sums of the
/// weighted states. Returns `(pooled, weights)`.
pub fn graph_attention<T: Real>(
    tape: &mut Tape<'_, T>,
    m: &Model<T>,
    h: Var,
    graph_of: &[usize],
    graph_count: usize,
) -> (Var, Var) {
    let (w, bias, u) = (tape.param(m.ids.vfg_w), tape.param(m.ids.vfg_b), tape.param(m.ids.vfg_u));
    let proj = tape.matmul(h, w);
    let proj = tape.add_row(proj, bias);
    let score = tape.matmul(proj, u);
    let alpha = tape.sigmoid(score);
    let weighted = tape.mul_col(h, alpha);
    let triples = graph_of.iter().enumerate().map(|(i, &g)| (g, i, T::one())).collect();
    (tape.mix(weighted, graph_count, triples), alpha)
}

/// Full graph encoder: one row per graph.
pub fn encode_graphs<T: Real>(tape: &mut Tape<'_, T>, m: &Model<T>, b: &GraphBatch) -> Var {
    let h0 = init_node_states(tape, m, b);
    let h = run_ggnn(tape, m, b, h0, m.config.ggnn_steps);
    graph_attention(tape, m, h, &b.graph_of, b.graph_count).0
}

pub struct QueryEncoding {
    /// One row per query.
    pub vectors: Var,
    /// Attention weight per non-PAD token, as a column.
    pub attention: Var,
    /// Query index of every attention row.
    pub segments: Vec<usize>,
}

/// LSTM over the non-PAD tokens of each query, then softmax attention
/// `softmax((h W + b) . u)` over its states.
pub fn encode_queries<T: Real>(
    tape: &mut Tape<'_, T>,
    m: &Model<T>,
    queries: &[Vec<u32>],
) -> Result<QueryEncoding, NnError> {
    let hd = m.config.hidden_dim;
    let toks: Vec<Vec<u32>> = queries
        .iter()
        .map(|q| q.iter().copied().filter(|&t| t != PAD).collect())
        .collect();
    if toks.iter().any(|t| t.is_empty()) {
        return Err(NnError::EmptyQuery);
    }
    let bsz = toks.len();
    let steps = toks.iter().map(Vec::len).max().unwrap_or(0);
    let (table, w, u, bias) = (
        tape.param(m.ids.q_embed),
        tape.param(m.ids.lstm_w),
        tape.param(m.ids.lstm_u),
        tape.param(m.ids.lstm_b),
    );
    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    let mut states = Vec::with_capacity(steps);
    for t in 0..steps {
        let triples = toks
            .iter()
            .enumerate()
            .filter_map(|(b, q)| q.get(t).map(|&tok| (b, tok as usize, T::one())))
            .collect();
        let x = tape.mix(table, bsz, triples);
        let mut gates = tape.matmul(x, w);
        if let Some(h) = h {
            let rec = tape.matmul(h, u);
            gates = tape.add(gates, rec);
        }
        let gates = tape.add_row(gates, bias);
        let i = tape.slice_cols(gates, 0, hd);
        let i = tape.sigmoid(i);
        let f = tape.slice_cols(gates, hd, hd);
        let f = tape.sigmoid(f);
        let g = tape.slice_cols(gates, 2 * hd, hd);
        let g = tape.tanh(g);
        let o = tape.slice_cols(gates, 3 * hd, hd);
        let o = tape.sigmoid(o);
        let ig = tape.mul(i, g);
        let c_new = match c {
            Some(c) => {
                let fc = tape.mul(f, c);
                tape.add(fc, ig)
            }
            None => ig,
        };
        let tc = tape.tanh(c_new);
        let h_new = tape.mul(o, tc);
        states.push(h_new);
        h = Some(h_new);
        c = Some(c_new);
    }
    // Rows past a query's end keep evolving but are never selected.
    let all = tape.concat_rows(&states);
    let mut select = Vec::new();
    let mut segments = Vec::new();
    for (b, q) in toks.iter().enumerate() {
        for t in 0..q.len() {
            select.push((select.len(), t * bsz + b, T::one()));
            segments.push(b);
        }
    }
    let k = select.len();
    let s = tape.mix(all, k, select);
    let (aw, ab, au) = (tape.param(m.ids.des_w), tape.param(m.ids.des_b), tape.param(m.ids.des_u));
    let proj = tape.matmul(s, aw);
    let proj = tape.add_row(proj, ab);
    let score = tape.matmul(proj, au);
    let alpha = tape.segment_softmax(score, segments.clone());
    let weighted = tape.mul_col(s, alpha);
    let sum = segments.iter().enumerate().map(|(i, &b)| (b, i, T::one())).collect();
    let vectors = tape.mix(weighted, bsz, sum);
    Ok(QueryEncoding {
        vectors,
        attention: alpha,
        segments,
    })
}

/// Summed margin ranking loss of a batch: code `i` against its own
/// description and against description `negatives[i]`.
pub fn batch_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    m: &Model<T>,
    graphs: &GraphBatch,
    queries: &[Vec<u32>],
    negatives: &[usize],
    margin: T,
) -> Result<Var, NnError> {
    let code = encode_graphs(tape, m, graphs);
    let desc = encode_queries(tape, m, queries)?.vectors;
    let neg_rows = negatives.iter().enumerate().map(|(i, &j)| (i, j, T::one())).collect();
    let neg = tape.mix(desc, negatives.len(), neg_rows);
    let pos_cos = tape.cosine_rows(code, desc);
    let neg_cos = tape.cosine_rows(code, neg);
    Ok(tape.hinge(pos_cos, neg_cos, margin))
}
