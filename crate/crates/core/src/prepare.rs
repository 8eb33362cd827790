//! Corpus pair -> optimized graph -> encoder inputs.

use serde::Serialize;
use thiserror::Error;

use crate::ir::{parse_module, IrError};
use crate::nn::GraphInput;
use crate::optimize::{optimize_with, OptStats, TrivialOpcodeSet};
use crate::text::{encode_sequence, split_identifier, CorpusPair, Vocabulary};
use crate::vfg::{build_vfg, graph_stats, BuildError, GraphStats, Vfg};

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("IR defines no function{}", .0.as_ref().map(|f| format!(" named {f}")).unwrap_or_default())]
    NoFunction(Option<String>),
}

#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub pair: CorpusPair,
    pub graph: Vfg,
    pub stats: GraphStats,
    pub opt: OptStats,
}

/// Parses the pair's IR, builds the graph of the named function (or the
/// first one defined) and optimizes it.
pub fn prepare_pair(pair: &CorpusPair, trivial: &TrivialOpcodeSet) -> Result<PreparedPair, PrepareError> {
    let module = parse_module(&pair.ir_text)?;
    let f = match &pair.function {
        Some(name) => module.function(name),
        None => module.functions.first(),
    }
    .ok_or_else(|| PrepareError::NoFunction(pair.function.clone()))?;
    let raw = build_vfg(f, &module.defined_names())?;
    let (graph, opt) = optimize_with(&raw, f, trivial);
    Ok(PreparedPair {
        pair: pair.clone(),
        stats: graph_stats(&graph),
        graph,
        opt,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PrepareFailure {
    pub id: String,
    pub error: String,
}

/// Prepares every pair, logging and collecting the ones that fail.
pub fn prepare_corpus(
    pairs: &[CorpusPair],
    trivial: &TrivialOpcodeSet,
) -> (Vec<PreparedPair>, Vec<PrepareFailure>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for p in pairs {
        match prepare_pair(p, trivial) {
            Ok(x) => ok.push(x),
            Err(e) => {
                log::warn!("skipping {}: {e}", p.id);
                failed.push(PrepareFailure {
                    id: p.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    if !failed.is_empty() {
        log::warn!("{} of {} pairs failed to build", failed.len(), pairs.len());
    }
    (ok, failed)
}

/// Graph-label and query vocabularies over a set of prepared pairs.
pub fn build_vocabularies(pairs: &[PreparedPair], ir_max: usize, query_max: usize) -> (Vocabulary, Vocabulary) {
    let ir = Vocabulary::build(
        pairs
            .iter()
            .flat_map(|p| p.graph.nodes.iter().flat_map(|n| split_identifier(&n.label))),
        ir_max,
    );
    let query = Vocabulary::build(pairs.iter().flat_map(|p| p.pair.query.iter()), query_max);
    (ir, query)
}

/// Encoder-ready form of a prepared pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub graph: GraphInput,
    pub query: Vec<u32>,
}

pub fn to_example(p: &PreparedPair, ir: &Vocabulary, query: &Vocabulary, max_query_len: usize) -> Example {
    Example {
        graph: GraphInput::from_vfg(&p.graph, ir),
        query: encode_sequence(&p.pair.query, query, max_query_len),
    }
}
