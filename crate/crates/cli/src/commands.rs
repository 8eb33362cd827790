//! Implementations of the subcommands.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use vfg_search::ir::parse_module;
use vfg_search::nn::{Checkpoint, Model};
use vfg_search::optimize::{optimize_with, TrivialOpcodeSet};
use vfg_search::prepare::{build_vocabularies, prepare_corpus, to_example, PreparedPair};
use vfg_search::search::{build_index, evaluate, parse_sessions, score_session, BucketSpec, Engine, SearchIndex};
use vfg_search::service::{router, serve as serve_http, shutdown_signal, AppState};
use vfg_search::text::{load_corpus, split, CorpusPair, FilterConfig, RawRecord};
use vfg_search::train::{loss_csv, train as run_training, TrainConfig};
use vfg_search::vfg::{build_vfg, GraphFile};
use vfg_search::write_atomic;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    write_atomic(path, bytes.as_ref()).with_context(|| format!("writing {}", path.display()))
}

fn trivial_set(path: Option<&Path>) -> Result<TrivialOpcodeSet> {
    match path {
        None => Ok(TrivialOpcodeSet::default()),
        Some(p) => Ok(TrivialOpcodeSet::parse(&read(p)?).with_context(|| format!("parsing {}", p.display()))?),
    }
}

pub fn extract(ir: &Path, function: Option<&str>, out: &Path, dot: Option<&Path>) -> Result<()> {
    let module = parse_module(&read(ir)?).with_context(|| format!("parsing {}", ir.display()))?;
    let f = match function {
        Some(name) => module
            .function(name)
            .with_context(|| format!("no function @{name} in {}", ir.display()))?,
        None => {
            let f = module
                .functions
                .first()
                .with_context(|| format!("{} defines no function", ir.display()))?;
            if module.functions.len() > 1 {
                log::warn!("{} defines {} functions; extracting @{}", ir.display(), module.functions.len(), f.name);
            }
            f
        }
    };
    let g = build_vfg(f, &module.defined_names())?;
    write(out, GraphFile::new(&g, Some(f)).to_json())?;
    if let Some(dot) = dot {
        write(dot, g.to_dot())?;
    }
    log::info!("@{}: {} nodes, {} edges", f.name, g.node_count(), g.edges.len());
    Ok(())
}

pub fn optimize(input: &Path, out: &Path, stats: Option<&Path>, trivial: Option<&Path>) -> Result<()> {
    let file = GraphFile::from_json(&read(input)?).with_context(|| format!("parsing {}", input.display()))?;
    let f = file
        .function_ir()?
        .with_context(|| format!("{} carries no IR; re-extract it with `extract`", input.display()))?;
    let (g, s) = optimize_with(&file.graph(), &f, &trivial_set(trivial)?);
    write(out, GraphFile::new(&g, Some(&f)).to_json())?;
    let json = serde_json::to_string_pretty(&s)?;
    match stats {
        Some(p) => write(p, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

pub struct DatasetArgs {
    pub raw: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub test_fraction: f64,
    pub reject_patterns: Option<PathBuf>,
    pub ir_vocab_size: usize,
    pub query_vocab_size: usize,
}

fn write_jsonl(path: &Path, pairs: &[CorpusPair]) -> Result<()> {
    let mut s = String::new();
    for p in pairs {
        let rec: RawRecord = p.to_record();
        s.push_str(&serde_json::to_string(&rec)?);
        s.push('\n');
    }
    write(path, s)
}

pub fn dataset_build(a: &DatasetArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.test_fraction) {
        bail!("--test-fraction must lie in [0, 1)");
    }
    let mut filter = FilterConfig::default();
    if let Some(p) = &a.reject_patterns {
        filter.load_reject_patterns(&read(p)?)?;
    }
    let (pairs, summary) = load_corpus(&a.raw, &filter)?;
    // drop pairs whose IR does not yield a graph so later stages agree
    let (prepared, failures) = prepare_corpus(&pairs, &TrivialOpcodeSet::default());
    let buildable: Vec<CorpusPair> = prepared.iter().map(|p| p.pair.clone()).collect();
    let (train, test) = split(&buildable, a.test_fraction, a.seed);
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_jsonl(&a.out.join("train.jsonl"), &train)?;
    write_jsonl(&a.out.join("test.jsonl"), &test)?;
    let train_ids: std::collections::HashSet<&str> = train.iter().map(|p| p.id.as_str()).collect();
    let train_prepared: Vec<PreparedPair> = prepared
        .into_iter()
        .filter(|p| train_ids.contains(p.pair.id.as_str()))
        .collect();
    let (ir, query) = build_vocabularies(&train_prepared, a.ir_vocab_size, a.query_vocab_size);
    write(&a.out.join("ir_vocab.tsv"), ir.to_tsv())?;
    write(&a.out.join("query_vocab.tsv"), query.to_tsv())?;
    let report = serde_json::json!({
        "seed": a.seed,
        "test_fraction": a.test_fraction,
        "filter": summary,
        "build_failures": failures,
        "train": train.len(),
        "test": test.len(),
        "ir_vocab": ir.len(),
        "query_vocab": query.len(),
    });
    write(&a.out.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    log::info!(
        "{} accepted, {} failed to build; {} train / {} test pairs written to {}",
        summary.accepted,
        failures.len(),
        train.len(),
        test.len(),
        a.out.display()
    );
    Ok(())
}

/// A corpus directory stands for the given file inside it.
fn corpus_file(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_name)
    } else {
        path.to_path_buf()
    }
}

fn load_prepared(path: &Path) -> Result<Vec<PreparedPair>> {
    let (pairs, _) = load_corpus(path, &FilterConfig::default())?;
    let (prepared, failures) = prepare_corpus(&pairs, &TrivialOpcodeSet::default());
    if !failures.is_empty() {
        log::warn!("{}: {} pair(s) skipped", path.display(), failures.len());
    }
    Ok(prepared)
}

pub fn train(corpus: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = match config {
        Some(p) => TrainConfig::from_toml(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::default(),
    };
    let pairs = load_prepared(&corpus_file(corpus, "train.jsonl"))?;
    let (ir_vocab, query_vocab) = build_vocabularies(&pairs, cfg.ir_vocab_size, cfg.query_vocab_size);
    let examples: Vec<_> = pairs
        .iter()
        .map(|p| to_example(p, &ir_vocab, &query_vocab, cfg.model.max_query_len))
        .collect();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("train.toml"), toml::to_string(&cfg)?)?;
    write(&out.join("ir_vocab.tsv"), ir_vocab.to_tsv())?;
    write(&out.join("query_vocab.tsv"), query_vocab.to_tsv())?;
    log::info!(
        "training on {} pairs; vocabularies {} / {}",
        examples.len(),
        ir_vocab.len(),
        query_vocab.len()
    );
    let model = Model::new(cfg.model.clone(), ir_vocab.len(), query_vocab.len(), cfg.seed);
    let ckpt = |m: &Model<f32>| Checkpoint {
        model: m.clone(),
        ir_vocab: ir_vocab.clone(),
        query_vocab: query_vocab.clone(),
    };
    let mut curve = Vec::new();
    let mut save_error = None;
    let outcome = run_training(&examples, model, &cfg, |r, m| {
        curve.push(r.mean_loss);
        if cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0 {
            let path = out.join(format!("model-epoch{:03}.ckpt", r.epoch));
            if let Err(e) = ckpt(m).save(&path) {
                save_error = Some(anyhow::Error::new(e).context(format!("writing {}", path.display())));
                return ControlFlow::Break(());
            }
            // keep the curve on disk in step with the checkpoints
            if let Err(e) = write(&out.join("loss.csv"), loss_csv(&curve)) {
                save_error = Some(e);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = save_error {
        return Err(e);
    }
    let final_ckpt = ckpt(&outcome.model);
    final_ckpt.save(&out.join("model.ckpt"))?;
    write(&out.join("loss.csv"), outcome.loss_csv())?;
    if !outcome.validation_curve.is_empty() {
        let mut s = String::from("epoch,validation_mrr\n");
        for (i, v) in outcome.validation_curve.iter().enumerate() {
            s.push_str(&format!("{},{v}\n", i + 1));
        }
        write(&out.join("validation.csv"), s)?;
    }
    log::info!(
        "wrote {} (epoch {}, version {})",
        out.join("model.ckpt").display(),
        outcome.best_epoch,
        &final_ckpt.version()[..12]
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_engine(checkpoint: &Path, index: &Path) -> Result<Engine> {
    let ckpt = load_checkpoint(checkpoint)?;
    let index = SearchIndex::load(index).with_context(|| format!("loading {}", index.display()))?;
    Ok(Engine::new(ckpt, index)?)
}

pub fn index_build(checkpoint: &Path, pairs: &[PathBuf], out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let mut prepared = Vec::new();
    for p in pairs {
        if p.is_dir() {
            for name in ["train.jsonl", "test.jsonl"] {
                let f = p.join(name);
                if f.exists() {
                    prepared.extend(load_prepared(&f)?);
                }
            }
        } else {
            prepared.extend(load_prepared(p)?);
        }
    }
    let mut seen = std::collections::HashSet::new();
    prepared.retain(|p| {
        let fresh = seen.insert(p.pair.id.clone());
        if !fresh {
            log::warn!("duplicate id {} skipped", p.pair.id);
        }
        fresh
    });
    let index = build_index(&ckpt, &prepared);
    index.save(out).with_context(|| format!("writing {}", out.display()))?;
    log::info!("indexed {} snippets into {}", index.len(), out.display());
    Ok(())
}

pub fn search(checkpoint: &Path, index: &Path, query: &str, k: usize, json: bool) -> Result<()> {
    let engine = load_engine(checkpoint, index)?;
    let hits = engine.search(query, k)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&hits)?);
    } else {
        for h in &hits {
            println!("{:>3}  {:.4}  {}", h.rank, h.score, h.id);
        }
    }
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub buckets: Option<PathBuf>,
    pub sessions: Vec<PathBuf>,
    pub json: Option<PathBuf>,
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if a.test.is_none() && a.sessions.is_empty() {
        bail!("nothing to evaluate: give --test and/or --session");
    }
    let mut out = serde_json::Map::new();
    if let (Some(test), Some(checkpoint), Some(index)) = (&a.test, &a.checkpoint, &a.index) {
        let spec = match &a.buckets {
            Some(p) => BucketSpec::from_toml(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
            None => BucketSpec::default(),
        };
        let engine = load_engine(checkpoint, index)?;
        let (pairs, _) = load_corpus(&corpus_file(test, "test.jsonl"), &FilterConfig::default())?;
        let report = evaluate(&engine.checkpoint, &engine.index, &pairs, &spec)?;
        println!("{}", report.to_table());
        out.insert("test".into(), serde_json::to_value(&report)?);
    }
    let mut scores = Vec::new();
    for path in &a.sessions {
        for s in parse_sessions(&read(path)?).with_context(|| format!("parsing {}", path.display()))? {
            match score_session(&s) {
                Ok(score) => {
                    println!(
                        "session {}: {} labeled queries, SuccessRate@10 {:.4}, MRR {:.4}",
                        score.session_id, score.labeled_queries, score.success_at_10, score.mrr
                    );
                    scores.push(score);
                }
                Err(e) => log::warn!("session {} in {} not scored: {e}", s.session_id, path.display()),
            }
        }
    }
    if !a.sessions.is_empty() {
        out.insert("sessions".into(), serde_json::to_value(&scores)?);
    }
    if let Some(p) = &a.json {
        write(p, serde_json::to_string_pretty(&out)?)?;
    }
    Ok(())
}

pub fn serve(bind: &str, checkpoint: PathBuf, index: PathBuf, static_dir: Option<PathBuf>, feedback: PathBuf) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        let state = AppState::new(feedback);
        let loader = Arc::clone(&state);
        // answer 503 until the model and index are loaded
        tokio::task::spawn_blocking(move || match load_engine(&checkpoint, &index) {
            Ok(engine) => {
                let size = engine.index.len();
                let generation = loader.install(engine);
                log::info!("engine ready: {size} snippets (generation {generation})");
            }
            Err(e) => log::error!("failed to load engine: {e:#}"),
        });
        serve_http(listener, router(state, static_dir), shutdown_signal()).await?;
        log::info!("shut down");
        Ok(())
    })
}
