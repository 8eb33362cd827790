//! Helpers shared by integration tests.

#![allow(dead_code)]

pub mod checks;
pub mod oracles;
pub mod random_ir;

use std::path::PathBuf;

use vfg_search::nn::{Checkpoint, Model, ModelConfig};
use vfg_search::optimize::TrivialOpcodeSet;
use vfg_search::prepare::{build_vocabularies, prepare_corpus, PreparedPair};
use vfg_search::search::{build_index, Engine};
use vfg_search::text::{tokenize_query, CorpusPair};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn pair(id: &str, query: &str, ir: &str) -> CorpusPair {
    CorpusPair {
        id: id.into(),
        query_text: query.into(),
        query: tokenize_query(query),
        ir_text: ir.into(),
        code_text: format!("int {id}(int x);"),
        code_line_count: 3,
        function: None,
    }
}

pub fn small_pairs() -> Vec<CorpusPair> {
    vec![
        pair(
            "add_one",
            "add one to a number",
            "define i32 @add_one(i32 %x) {\nentry:\n  %r = add nsw i32 %x, 1\n  ret i32 %r\n}\n",
        ),
        pair(
            "double_it",
            "multiply a value by two",
            "define i32 @double_it(i32 %x) {\nentry:\n  %r = mul nsw i32 %x, 2\n  ret i32 %r\n}\n",
        ),
        pair(
            "max_of",
            "return the larger of two integers",
            "define i32 @max_of(i32 %a, i32 %b) {\nentry:\n  %c = icmp sgt i32 %a, %b\n  br i1 %c, label %then, label %else\nthen:\n  ret i32 %a\nelse:\n  ret i32 %b\n}\n",
        ),
    ]
}

pub fn small_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        hidden_dim: 8,
        ggnn_steps: 2,
        ..ModelConfig::default()
    }
}

/// An untrained checkpoint with an index over [`small_pairs`].
pub fn tiny_engine() -> (Engine, Vec<PreparedPair>) {
    let (prepared, failed) = prepare_corpus(&small_pairs(), &TrivialOpcodeSet::default());
    assert!(failed.is_empty(), "{failed:?}");
    let (ir_vocab, query_vocab) = build_vocabularies(&prepared, 100, 100);
    let model = Model::new(small_config(), ir_vocab.len(), query_vocab.len(), 3);
    let ckpt = Checkpoint {
        model,
        ir_vocab,
        query_vocab,
    };
    let index = build_index(&ckpt, &prepared);
    (Engine::new(ckpt, index).unwrap(), prepared)
}

pub fn corpus64_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/corpus64/corpus.jsonl")
}

/// The bundled 64-pair corpus, filtered and prepared.
pub fn corpus64() -> Vec<PreparedPair> {
    let (pairs, summary) =
        vfg_search::text::load_corpus(&corpus64_path(), &vfg_search::text::FilterConfig::default()).unwrap();
    assert!(summary.rejected.is_empty(), "{:?}", summary.rejected);
    let (prepared, failed) = prepare_corpus(&pairs, &TrivialOpcodeSet::default());
    assert!(failed.is_empty(), "{failed:?}");
    prepared
}
