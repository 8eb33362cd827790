//! Acceptance checks shared by the per-topic test files and the
//! `acceptance` target. Each returns a one-line summary on success and a
//! description of the first failures otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::ControlFlow;
use std::time::Instant;
use vfg_search::prepare::{build_vocabularies, prepare_corpus, to_example};
use vfg_search::search::{build_index, evaluate, BucketSpec, EvalReport};
use vfg_search::text::{load_corpus, FilterConfig, Vocabulary};
use vfg_search::train::{train, TrainConfig};
use vfg_search::ir::{parse_module, FunctionIR, Module};
use vfg_search::nn::gradcheck::{gradient_check, Sample};
use vfg_search::nn::{encode_queries, Checkpoint, GraphInput, Model, ModelConfig, Tape};
use vfg_search::search::{mean_reciprocal_rank, success_rate_at_k, SearchIndex, SnippetMeta};
use vfg_search::optimize::{
    is_numeric_label, merge_isolated_blocks, optimize, remove_register_nodes, remove_trivial_opcodes,
    rename_temporaries, TrivialOpcodeSet,
};
use vfg_search::vfg::{build_vfg, search_stored_values, EdgeKind, NodeOrigin, Vfg};

use super::oracles::{naive_graph_vector, reachable_pairs, stores_on_backward_paths};
use super::random_ir::random_function;

pub type Check = Result<String, String>;

pub const RANDOM_CFGS: u64 = 200;
pub const MAX_BLOCKS: usize = 8;

fn ll_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ll"))
        .collect();
    v.sort();
    v
}

pub fn graph_fixtures() -> Vec<PathBuf> {
    ll_files(&super::fixtures_dir().join("graphs"))
}

/// Every hand-written module: graph fixtures and the semantic pairs.
pub fn fixture_modules() -> Vec<(String, Module)> {
    graph_fixtures()
        .into_iter()
        .chain(ll_files(&super::fixtures_dir().join("semantic")))
        .map(|p| {
            let m = parse_module(&std::fs::read_to_string(&p).unwrap()).unwrap();
            (p.file_stem().unwrap().to_string_lossy().into_owned(), m)
        })
        .collect()
}

pub fn random_module(seed: u64) -> Module {
    let text = random_function(seed, MAX_BLOCKS);
    parse_module(&text).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"))
}

fn corpus_modules() -> Vec<(String, Module)> {
    let text = std::fs::read_to_string(super::corpus64_path()).unwrap();
    text.lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let m = parse_module(v["ir"].as_str().unwrap()).unwrap();
            (v["id"].as_str().unwrap().to_string(), m)
        })
        .collect()
}

fn summarize(failures: Vec<String>, ok: String) -> Check {
    if failures.is_empty() {
        Ok(ok)
    } else {
        let n = failures.len();
        Err(format!("{n} failures; first: {}", failures.into_iter().take(3).collect::<Vec<_>>().join(" | ")))
    }
}

fn stored_values_agree(name: &str, f: &FunctionIR, failures: &mut Vec<String>) -> usize {
    let mut sites = 0;
    for (site, inst) in f.instructions() {
        let Some(addr) = inst.load_address() else { continue };
        sites += 1;
        let got = search_stored_values(addr, site, f);
        let set: BTreeSet<_> = got.iter().cloned().collect();
        let want = stores_on_backward_paths(f, addr, site);
        if set != want || set.len() != got.len() || set.contains(addr) {
            failures.push(format!("{name} load at {site:?}: got {got:?}, oracle {want:?}"));
        }
    }
    sites
}

/// Stored-value search against exhaustive enumeration of acyclic backward
/// paths, on every fixture, the bundled corpus and random CFGs.
pub fn stored_values() -> Check {
    let mut failures = Vec::new();
    let mut sites = 0;
    let mut functions = 0;
    for (name, m) in fixture_modules().into_iter().chain(corpus_modules()) {
        for f in &m.functions {
            sites += stored_values_agree(&name, f, &mut failures);
            functions += 1;
        }
    }
    for seed in 0..RANDOM_CFGS {
        let m = random_module(seed);
        sites += stored_values_agree(&format!("random#{seed}"), &m.functions[0], &mut failures);
        functions += 1;
    }
    summarize(failures, format!("{sites} load sites in {functions} functions agree"))
}

/// Raw node behind every node of an optimized graph. Merged label nodes
/// stand for every label of their straight-line chain.
fn provenance(raw: &Vfg, opt: &Vfg, f: &FunctionIR) -> Vec<Vec<usize>> {
    // union-find over blocks joined by a single-exit/single-entry edge
    let n = f.blocks.len();
    let index: BTreeMap<&str, usize> = f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    let succ: Vec<BTreeSet<usize>> = f
        .blocks
        .iter()
        .map(|b| b.successors.iter().map(|s| index[s.as_str()]).collect())
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] == x {
            x
        } else {
            let r = find(p, p[x]);
            p[x] = r;
            r
        }
    }
    for a in 0..n {
        if succ[a].len() == 1 {
            let b = *succ[a].iter().next().unwrap();
            let preds = (0..n).filter(|&p| succ[p].contains(&b)).count();
            if b != a && preds == 1 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let raw_by_ident: BTreeMap<&str, usize> = raw
        .nodes
        .iter()
        .map(|n| (n.ident.as_deref().unwrap(), n.id))
        .collect();
    opt.nodes
        .iter()
        .map(|node| {
            let ident = node.ident.as_deref().unwrap();
            if node.origin == NodeOrigin::LabelId {
                let group = find(&mut parent, index[ident]);
                (0..n)
                    .filter(|&b| find(&mut parent, b) == group)
                    .filter_map(|b| raw_by_ident.get(f.blocks[b].label.as_str()).copied())
                    .collect()
            } else {
                vec![raw_by_ident[ident]]
            }
        })
        .collect()
}

struct OptOutcome {
    before: usize,
    after: usize,
}

fn optimizer_properties(name: &str, f: &FunctionIR, raw: &Vfg, failures: &mut Vec<String>) -> OptOutcome {
    let trivial = TrivialOpcodeSet::default();
    let (opt, _) = optimize(raw, f);
    let mut fail = |what: String| failures.push(format!("{name}: {what}"));

    let (again, _) = optimize(&opt, f);
    if again != opt {
        fail("optimize is not idempotent".into());
    }

    let s1 = rename_temporaries(raw, f);
    let s2 = remove_trivial_opcodes(&s1, &trivial);
    let s3 = remove_register_nodes(&s2);
    let s4 = merge_isolated_blocks(&s3, f);
    let counts = [raw.node_count(), s1.node_count(), s2.node_count(), s3.node_count(), s4.node_count()];
    if counts.windows(2).any(|w| w[1] > w[0]) {
        fail(format!("node count grows across steps {counts:?}"));
    }
    if s4 != opt {
        fail("step-by-step result differs from optimize".into());
    }

    for n in &opt.nodes {
        if is_numeric_label(&n.label) {
            fail(format!("numeric label {:?} survives", n.label));
        }
        if trivial.contains(&n.label) {
            fail(format!("trivial opcode {:?} survives", n.label));
        }
    }

    let before = reachable_pairs(raw);
    let after = reachable_pairs(&opt);
    let prov = provenance(raw, &opt, f);
    for x in 0..opt.node_count() {
        for y in 0..opt.node_count() {
            if x == y || after.contains(&(x, y)) {
                continue;
            }
            let lost = prov[x]
                .iter()
                .any(|&s| prov[y].iter().any(|&t| before.contains(&(s, t))));
            if lost {
                fail(format!(
                    "{} ~> {} reachable before optimizing but not after",
                    opt.nodes[x].label, opt.nodes[y].label
                ));
            }
        }
    }
    OptOutcome {
        before: raw.node_count(),
        after: opt.node_count(),
    }
}

pub const MIN_FIXTURE_REDUCTION: f64 = 0.30;

/// Optimizer properties on every fixture module, the bundled corpus and
/// random graphs, plus the aggregate node reduction over all of those
/// fixture files. The figure for the hand-written graph fixtures alone is
/// reported too; most of them are minimal builder probes.
pub fn optimizer() -> Check {
    let mut failures = Vec::new();
    let (mut before, mut after) = (0, 0);
    let (mut hand_before, mut hand_after) = (0, 0);
    let graph_names: BTreeSet<String> = graph_fixtures()
        .iter()
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    for (name, m) in fixture_modules().into_iter().chain(corpus_modules()) {
        let f = &m.functions[0];
        let raw = build_vfg(f, &m.defined_names()).unwrap();
        let o = optimizer_properties(&name, f, &raw, &mut failures);
        before += o.before;
        after += o.after;
        if graph_names.contains(&name) {
            hand_before += o.before;
            hand_after += o.after;
        }
    }
    for seed in 0..RANDOM_CFGS {
        let m = random_module(seed);
        let f = &m.functions[0];
        let raw = build_vfg(f, &m.defined_names()).unwrap();
        optimizer_properties(&format!("random#{seed}"), f, &raw, &mut failures);
    }
    let reduction = 1.0 - after as f64 / before as f64;
    let hand = 1.0 - hand_after as f64 / hand_before as f64;
    if reduction < MIN_FIXTURE_REDUCTION {
        failures.push(format!("fixture node reduction {:.1}% < 30%", reduction * 100.0));
    }
    summarize(
        failures,
        format!(
            "properties hold; fixture nodes {before} -> {after} ({:.1}% reduction; hand-written graphs alone {:.1}%)",
            reduction * 100.0,
            hand * 100.0
        ),
    )
}

pub const GRAD_HIDDEN: usize = 16;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const ENCODER_GRAPHS: u64 = 100;
pub const ENCODER_TOLERANCE: f64 = 1e-6;
const VOCAB: usize = 12;

/// Random encoder input: 1..=10 nodes with 1..=3 sub-tokens each and up to
/// 2n typed edges (duplicates and self-loops allowed).
pub fn random_graph_input(rng: &mut impl rand::Rng) -> GraphInput {
    let n = rng.gen_range(1..=10);
    let node_tokens = (0..n)
        .map(|_| (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..VOCAB as u32)).collect())
        .collect();
    let edges = (0..rng.gen_range(0..=2 * n))
        .map(|_| {
            let kind = if rng.gen_bool(0.5) { EdgeKind::Data } else { EdgeKind::Control };
            (rng.gen_range(0..n), rng.gen_range(0..n), kind)
        })
        .collect();
    GraphInput { node_tokens, edges }
}

pub fn random_query(rng: &mut impl rand::Rng, max_len: usize) -> Vec<u32> {
    let len = rng.gen_range(1..=max_len);
    let mut q: Vec<u32> = (0..len).map(|_| rng.gen_range(2..VOCAB as u32)).collect();
    q.resize(max_len, vfg_search::text::PAD);
    q
}

fn small_model(hidden: usize, seed: u64) -> Model<f64> {
    let cfg = ModelConfig {
        embed_dim: 8,
        hidden_dim: hidden,
        ggnn_steps: 3,
        reverse_edges: true,
        max_query_len: 6,
    };
    Model::new(cfg, VOCAB, VOCAB, seed)
}

pub const GRAD_EPS: f64 = 1e-5;

/// Central-difference gradient check of the full ranking loss at hidden
/// size 16 in double precision, over three random batches.
pub fn gradient() -> Check {
    let mut worst = (0.0, None, 0);
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(11 + seed);
        let model = small_model(GRAD_HIDDEN, 4 + seed);
        let sample = Sample {
            graphs: (0..3).map(|_| random_graph_input(&mut rng)).collect(),
            queries: (0..3).map(|_| random_query(&mut rng, 6)).collect(),
            negatives: vec![1, 2, 0],
            margin: 0.6,
        };
        let r = gradient_check(&model, &sample, GRAD_EPS).map_err(|e| e.to_string())?;
        if r.loss == 0.0 {
            return Err(format!("seed {seed}: loss is zero, nothing to check"));
        }
        worst.2 += r.checked;
        if r.max_relative_error >= worst.0 {
            worst.0 = r.max_relative_error;
            worst.1 = r.worst;
        }
    }
    let line = format!("max relative error {:.2e} over {} entries (worst {:?})", worst.0, worst.2, worst.1);
    if worst.0 < GRAD_TOLERANCE {
        Ok(line)
    } else {
        Err(line)
    }
}

fn max_abs_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// On random graphs and queries: the batched encoder equals the naive
/// evaluator, node order does not matter, batching does not matter, and
/// query attention weights sum to one.
pub fn encoder_invariants() -> Check {
    let model = small_model(GRAD_HIDDEN, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = [0.0f64; 4];
    let mut failures = Vec::new();
    let mut batch = Vec::new();
    for i in 0..ENCODER_GRAPHS {
        let g = random_graph_input(&mut rng);
        let v = model.embed_graphs(&[&g]);
        let naive = naive_graph_vector(&model, &g);
        let d_naive = max_abs_diff(v.row(0), &naive);

        let mut perm: Vec<usize> = (0..g.node_tokens.len()).collect();
        perm.shuffle(&mut rng);
        // perm[old] = new position
        let mut node_tokens = vec![Vec::new(); perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            node_tokens[new] = g.node_tokens[old].clone();
        }
        let mut edges: Vec<_> = g.edges.iter().map(|&(s, d, k)| (perm[s], perm[d], k)).collect();
        edges.shuffle(&mut rng);
        let permuted = GraphInput { node_tokens, edges };
        let d_perm = max_abs_diff(v.row(0), model.embed_graphs(&[&permuted]).row(0));

        let q: Vec<Vec<u32>> = (0..3).map(|_| random_query(&mut rng, 6)).collect();
        let mut tape = Tape::new(&model.params);
        let enc = encode_queries(&mut tape, &model, &q).map_err(|e| e.to_string())?;
        let alpha = tape.value(enc.attention);
        let mut sums = vec![0.0; q.len()];
        for (row, &s) in enc.segments.iter().enumerate() {
            sums[s] += alpha[[row, 0]];
        }
        let d_soft = sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);

        for (slot, d) in [d_naive, d_perm, d_soft].into_iter().enumerate() {
            worst[slot] = worst[slot].max(d);
            if d > ENCODER_TOLERANCE {
                failures.push(format!("graph {i}: check {slot} off by {d:e}"));
            }
        }
        batch.push((g, v.row(0).to_owned()));
    }
    let refs: Vec<&GraphInput> = batch.iter().map(|(g, _)| g).collect();
    let together = model.embed_graphs(&refs);
    for (i, (_, alone)) in batch.iter().enumerate() {
        let d = max_abs_diff(together.row(i), alone);
        worst[3] = worst[3].max(d);
        if d > ENCODER_TOLERANCE {
            failures.push(format!("graph {i}: batched encoding off by {d:e}"));
        }
    }
    summarize(
        failures,
        format!(
            "max deviation: naive {:.1e}, permutation {:.1e}, softmax sum {:.1e}, batching {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

pub const SEARCH_VECTORS: usize = 1000;

/// Top-k search equals a full sort for every k on 1000 random vectors
/// (including exact duplicates, so ties are exercised); the f32 scores
/// agree with a double-precision cosine; rank_of matches the full sort.
pub fn search_brute_force() -> Check {
    let dim = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut ids: Vec<usize> = (0..SEARCH_VECTORS).collect();
    ids.shuffle(&mut rng);
    let mut raw: Vec<Vec<f32>> = Vec::new();
    let mut index = SearchIndex::new(dim, "test");
    for (row, id) in ids.iter().enumerate() {
        let v: Vec<f32> = if row % 10 == 9 {
            raw[row - 1].clone()
        } else {
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let meta = SnippetMeta {
            id: format!("s{id:04}"),
            code_line_count: 1,
            vfg_node_count: 1,
            vfg_diameter: 0,
            code_text: String::new(),
        };
        index.insert(meta, ArrayView1::from(&v)).map_err(|e| e.to_string())?;
        raw.push(v);
    }
    let mut failures = Vec::new();
    let mut searches = 0;
    for qi in 0..5 {
        let q: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scores = index.scores(ArrayView1::from(&q)).map_err(|e| e.to_string())?;
        let norm = |v: &[f32]| v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        for (row, v) in raw.iter().enumerate() {
            let cos = v.iter().zip(&q).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() / (norm(v) * norm(&q));
            if (cos - scores[row] as f64).abs() > 1e-5 {
                failures.push(format!("query {qi} row {row}: score {} vs cosine {cos}", scores[row]));
            }
        }
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then_with(|| index.snippets[a].id.cmp(&index.snippets[b].id))
        });
        for k in 1..=raw.len() + 2 {
            let hits = index.search_vector(ArrayView1::from(&q), k).map_err(|e| e.to_string())?;
            searches += 1;
            let got: Vec<usize> = hits.iter().map(|h| h.index).collect();
            let want = &order[..k.min(order.len())];
            let ranks_ok = hits.iter().enumerate().all(|(i, h)| h.rank == i + 1 && h.score == scores[h.index]);
            if got != want || !ranks_ok {
                failures.push(format!("query {qi} k {k}: top-k differs from full sort"));
            }
        }
        for (pos, &row) in order.iter().enumerate().step_by(37) {
            let r = index.rank_of(ArrayView1::from(&q), row).map_err(|e| e.to_string())?;
            if r != pos + 1 {
                failures.push(format!("query {qi} row {row}: rank_of {r}, full sort {}", pos + 1));
            }
        }
    }
    summarize(failures, format!("{searches} searches over {SEARCH_VECTORS} vectors agree with a full sort"))
}

/// The worked metric example: ranks 1, 2 and 4.
pub fn metric_examples() -> Check {
    let ranks = [Some(1), Some(2), Some(4)];
    let mrr = mean_reciprocal_rank(&ranks).map_err(|e| e.to_string())?;
    let r1 = success_rate_at_k(&ranks, 1).map_err(|e| e.to_string())?;
    let r5 = success_rate_at_k(&ranks, 5).map_err(|e| e.to_string())?;
    let want = [(mrr, 0.5833), (r1, 1.0 / 3.0), (r5, 1.0)];
    let line = format!("MRR {mrr:.4}, R@1 {r1:.4}, R@5 {r5:.4}");
    // 0.5833 is the rounded value of 7/12
    if want.iter().all(|(got, w)| (got - w).abs() < 5e-5) {
        Ok(line)
    } else {
        Err(line)
    }
}

type GoldenSet = BTreeSet<(String, String, String)>;

/// Parses `node <ident> <label> <origin>` and `data|control <src> <dst>`
/// lines; also returns the raw line counts so duplicates are noticed.
pub fn parse_golden(text: &str) -> Result<(GoldenSet, GoldenSet, usize, usize), String> {
    let (mut nodes, mut edges) = (GoldenSet::new(), GoldenSet::new());
    let (mut node_lines, mut edge_lines) = (0, 0);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        match (f.first().copied(), f.len()) {
            (Some("node"), 4) => {
                nodes.insert((f[1].into(), f[2].into(), f[3].into()));
                node_lines += 1;
            }
            (Some("data" | "control"), 3) => {
                edges.insert((f[0].into(), f[1].into(), f[2].into()));
                edge_lines += 1;
            }
            _ => return Err(format!("bad golden line {line:?}")),
        }
    }
    Ok((nodes, edges, node_lines, edge_lines))
}

fn golden_view(g: &Vfg) -> (GoldenSet, GoldenSet) {
    let ident = |i: usize| g.nodes[i].ident.clone().unwrap_or_default();
    let nodes = g
        .nodes
        .iter()
        .map(|n| {
            let origin = serde_json::to_value(n.origin).unwrap();
            (n.ident.clone().unwrap_or_default(), n.label.clone(), origin.as_str().unwrap().to_string())
        })
        .collect();
    let edges = g
        .edges
        .iter()
        .map(|e| {
            let kind = match e.kind {
                EdgeKind::Data => "data",
                EdgeKind::Control => "control",
            };
            (kind.to_string(), ident(e.src), ident(e.dst))
        })
        .collect();
    (nodes, edges)
}

pub const MIN_FIXTURES: usize = 20;
pub const REQUIRED_FIXTURES: [&str; 4] = ["fig4", "diamond", "counting_loop", "recursive_factorial"];

/// Built graphs of the hand-written fixtures equal their goldens exactly.
pub fn golden_graphs() -> Check {
    let paths = graph_fixtures();
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    let mut failures = Vec::new();
    if names.len() < MIN_FIXTURES {
        failures.push(format!("only {} fixtures", names.len()));
    }
    for required in REQUIRED_FIXTURES {
        if !names.iter().any(|n| n == required) {
            failures.push(format!("missing fixture {required}"));
        }
    }
    for (path, name) in paths.iter().zip(&names) {
        let m = parse_module(&std::fs::read_to_string(path).unwrap()).map_err(|e| format!("{name}: {e}"))?;
        let g = build_vfg(&m.functions[0], &m.defined_names()).map_err(|e| format!("{name}: {e}"))?;
        let golden = std::fs::read_to_string(path.with_extension("golden")).map_err(|e| format!("{name}: {e}"))?;
        let (want_nodes, want_edges, n_lines, e_lines) = parse_golden(&golden)?;
        let (got_nodes, got_edges) = golden_view(&g);
        if got_nodes != want_nodes || g.node_count() != n_lines {
            failures.push(format!(
                "{name}: nodes differ; missing {:?}, extra {:?}",
                want_nodes.difference(&got_nodes).collect::<Vec<_>>(),
                got_nodes.difference(&want_nodes).collect::<Vec<_>>()
            ));
        }
        if got_edges != want_edges || g.edges.len() != e_lines {
            failures.push(format!(
                "{name}: edges differ; missing {:?}, extra {:?}",
                want_edges.difference(&got_edges).collect::<Vec<_>>(),
                got_edges.difference(&want_edges).collect::<Vec<_>>()
            ));
        }
    }
    summarize(failures, format!("{} fixtures match their goldens", names.len()))
}

fn optimized_semantic(name: &str) -> Vfg {
    let path = super::fixtures_dir().join("semantic").join(name);
    let m = parse_module(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let f = &m.functions[0];
    let g = build_vfg(f, &m.defined_names()).unwrap();
    optimize(&g, f).0
}

/// Multiset Jaccard over node labels: sum of min counts over sum of max
/// counts.
pub fn multiset_jaccard(a: &Vfg, b: &Vfg) -> f64 {
    let count = |g: &Vfg| {
        let mut m: BTreeMap<String, usize> = BTreeMap::new();
        for n in &g.nodes {
            *m.entry(n.label.clone()).or_default() += 1;
        }
        m
    };
    let (ca, cb) = (count(a), count(b));
    let keys: BTreeSet<&String> = ca.keys().chain(cb.keys()).collect();
    let (mut inter, mut union) = (0, 0);
    for k in keys {
        let (x, y) = (ca.get(k).copied().unwrap_or(0), cb.get(k).copied().unwrap_or(0));
        inter += x.min(y);
        union += x.max(y);
    }
    inter as f64 / union as f64
}

pub const MIN_LOOP_JACCARD: f64 = 0.9;

/// for/while versions of one sum optimize to nearly the same labels;
/// reordered statements change the data edges.
pub fn semantic_pairs() -> Check {
    let j = multiset_jaccard(&optimized_semantic("sum_for.ll"), &optimized_semantic("sum_while.ll"));
    let data = |g: &Vfg| -> BTreeSet<_> {
        g.labeled_edges()
            .into_iter()
            .filter(|e| e.2 == EdgeKind::Data)
            .collect()
    };
    let differ = data(&optimized_semantic("order_a.ll")) != data(&optimized_semantic("order_b.ll"));
    let line = format!("for/while Jaccard {j:.4}; reordered pair data edges differ: {differ}");
    if j >= MIN_LOOP_JACCARD && differ {
        Ok(line)
    } else {
        Err(line)
    }
}

pub const OVERFIT_MIN_MRR: f64 = 0.95;
pub const OVERFIT_MIN_R1: f64 = 0.9;
pub const OVERFIT_MAX_EPOCHS: usize = 200;
pub const OVERFIT_MAX_SECONDS: f64 = 15.0 * 60.0;
const OVERFIT_EVAL_EVERY: usize = 5;

fn checkpoint(model: &Model<f32>, ir: &Vocabulary, query: &Vocabulary) -> Checkpoint {
    Checkpoint {
        model: model.clone(),
        ir_vocab: ir.clone(),
        query_vocab: query.clone(),
    }
}

/// The default configuration memorizes the bundled 64-pair corpus:
/// training stops as soon as an evaluation (every 5 epochs) reaches the
/// targets.
pub fn overfit() -> Check {
    let start = Instant::now();
    let pairs = super::corpus64();
    let cfg = TrainConfig::default();
    if cfg.model != ModelConfig::default() || cfg.epochs > OVERFIT_MAX_EPOCHS {
        return Err("default config changed under the check".into());
    }
    let (ir, query) = build_vocabularies(&pairs, cfg.ir_vocab_size, cfg.query_vocab_size);
    let examples: Vec<_> = pairs
        .iter()
        .map(|p| to_example(p, &ir, &query, cfg.model.max_query_len))
        .collect();
    let model = Model::new(cfg.model.clone(), ir.len(), query.len(), cfg.seed);
    let corpus: Vec<_> = pairs.iter().map(|p| p.pair.clone()).collect();
    let mut last = (0, 0.0, 0.0);
    let mut error = None;
    train(&examples, model, &cfg, |r, m| {
        if r.epoch % OVERFIT_EVAL_EVERY != 0 {
            return ControlFlow::Continue(());
        }
        let ckpt = checkpoint(m, &ir, &query);
        let index = build_index(&ckpt, &pairs);
        match evaluate(&ckpt, &index, &corpus, &BucketSpec::default()) {
            Ok(rep) => {
                last = (r.epoch, rep.mrr, rep.r1);
                if rep.mrr >= OVERFIT_MIN_MRR && rep.r1 >= OVERFIT_MIN_R1 {
                    return ControlFlow::Break(());
                }
                ControlFlow::Continue(())
            }
            Err(e) => {
                error = Some(e.to_string());
                ControlFlow::Break(())
            }
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = error {
        return Err(e);
    }
    let secs = start.elapsed().as_secs_f64();
    let (epoch, mrr, r1) = last;
    let line = format!("epoch {epoch}: MRR {mrr:.4}, R@1 {r1:.4} after {secs:.0}s");
    if mrr >= OVERFIT_MIN_MRR && r1 >= OVERFIT_MIN_R1 && epoch <= OVERFIT_MAX_EPOCHS && secs <= OVERFIT_MAX_SECONDS {
        Ok(line)
    } else {
        Err(line)
    }
}

pub const DETERMINISM_EPOCHS: usize = 3;

struct RunArtifacts {
    loss_curve: Vec<f64>,
    report: EvalReport,
    checkpoint: Vec<u8>,
    index: Vec<u8>,
}

/// Corpus file -> graphs -> optimizer -> training -> index -> evaluation.
fn end_to_end(seed: u64) -> Result<RunArtifacts, String> {
    let (raw, _) = load_corpus(&super::corpus64_path(), &FilterConfig::default()).map_err(|e| e.to_string())?;
    let (pairs, _) = prepare_corpus(&raw, &TrivialOpcodeSet::default());
    let cfg = TrainConfig {
        epochs: DETERMINISM_EPOCHS,
        seed,
        ..TrainConfig::default()
    };
    let (ir, query) = build_vocabularies(&pairs, cfg.ir_vocab_size, cfg.query_vocab_size);
    let examples: Vec<_> = pairs
        .iter()
        .map(|p| to_example(p, &ir, &query, cfg.model.max_query_len))
        .collect();
    let model = Model::new(cfg.model.clone(), ir.len(), query.len(), cfg.seed);
    let out = train(&examples, model, &cfg, |_, _| ControlFlow::Continue(())).map_err(|e| e.to_string())?;
    let ckpt = checkpoint(&out.model, &ir, &query);
    let index = build_index(&ckpt, &pairs);
    let report = evaluate(&ckpt, &index, &raw, &BucketSpec::default()).map_err(|e| e.to_string())?;
    Ok(RunArtifacts {
        loss_curve: out.loss_curve,
        report,
        checkpoint: ckpt.to_bytes(),
        index: index.to_bytes(),
    })
}

/// Two seeded end-to-end runs agree bit for bit.
pub fn determinism() -> Check {
    let a = end_to_end(17)?;
    let b = end_to_end(17)?;
    let mut failures = Vec::new();
    let bits = |c: &[f64]| c.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    if bits(&a.loss_curve) != bits(&b.loss_curve) {
        failures.push(format!("loss curves differ: {:?} vs {:?}", a.loss_curve, b.loss_curve));
    }
    if a.report != b.report {
        failures.push("evaluation reports differ".into());
    }
    if a.checkpoint != b.checkpoint {
        failures.push("checkpoints differ".into());
    }
    if a.index != b.index {
        failures.push("indexes differ".into());
    }
    summarize(
        failures,
        format!(
            "identical loss curves {:?}, reports (MRR {:.4}), checkpoints and indexes",
            a.loss_curve, a.report.mrr
        ),
    )
}
