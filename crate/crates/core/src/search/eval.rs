use std::collections::HashMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{Metrics, SearchError, SearchIndex, SnippetMeta};
use crate::nn::Checkpoint;
use crate::text::{encode_sequence, CorpusPair};

/// Bucket edges per robustness dimension. Edges `[e0, e1, .., en]` give
/// the buckets `<e0`, `[e0,e1)`, .., `>=en`, so every value lands in
/// exactly one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BucketSpec {
    /// Query tokens.
    pub comment_length: Vec<usize>,
    /// Source lines.
    pub code_length: Vec<usize>,
    /// Optimized graph nodes.
    pub node_count: Vec<usize>,
    /// Undirected graph diameter.
    pub diameter: Vec<usize>,
}

impl Default for BucketSpec {
    fn default() -> Self {
        BucketSpec {
            comment_length: vec![0, 5, 10, 15, 20],
            code_length: vec![0, 10, 20, 30, 50],
            node_count: vec![0, 10, 20, 40, 80],
            diameter: vec![0, 5, 10, 15, 20],
        }
    }
}

impl BucketSpec {
    pub fn from_toml(text: &str) -> Result<Self, SearchError> {
        let spec: BucketSpec = toml::from_str(text).map_err(|e| SearchError::BucketSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        for (name, edges) in self.dimensions() {
            if edges.is_empty() {
                return Err(SearchError::BucketSpec(format!("{name}: no edges")));
            }
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SearchError::BucketSpec(format!("{name}: edges must strictly increase")));
            }
        }
        Ok(())
    }

    fn dimensions(&self) -> [(&'static str, &[usize]); 4] {
        [
            ("comment_length", &self.comment_length),
            ("code_length", &self.code_length),
            ("node_count", &self.node_count),
            ("diameter", &self.diameter),
        ]
    }
}

/// Bucket position of `v`: 0 is the underflow bucket, `edges.len()` the
/// overflow one.
fn bucket_of(edges: &[usize], v: usize) -> usize {
    edges.partition_point(|&e| e <= v)
}

fn bucket_label(edges: &[usize], b: usize) -> String {
    if b == 0 {
        format!("<{}", edges[0])
    } else if b == edges.len() {
        format!(">={}", edges[b - 1])
    } else {
        format!("[{},{})", edges[b - 1], edges[b])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: String,
    pub count: usize,
    /// Absent for empty buckets.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketTable {
    pub dimension: String,
    pub rows: Vec<BucketRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub id: String,
    /// Rank of the ground truth, or the reason the query was excluded.
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub index_size: usize,
    /// Queries that were ranked.
    pub queries: usize,
    /// Queries excluded with an error (e.g. ground truth not indexed).
    pub excluded: usize,
    pub mrr: f64,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub buckets: Vec<BucketTable>,
    pub outcomes: Vec<QueryOutcome>,
}

impl EvalReport {
    /// Aligned plain-text summary.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "queries {}  excluded {}  index {}\nMRR {:.4}  R@1 {:.4}  R@5 {:.4}  R@10 {:.4}\n",
            self.queries, self.excluded, self.index_size, self.mrr, self.r1, self.r5, self.r10
        );
        for t in &self.buckets {
            s.push_str(&format!("\n{}\n", t.dimension));
            s.push_str(&format!("  {:<12} {:>6} {:>8} {:>8} {:>8} {:>8}\n", "bucket", "n", "MRR", "R@1", "R@5", "R@10"));
            for r in &t.rows {
                match &r.metrics {
                    Some(m) => s.push_str(&format!(
                        "  {:<12} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                        r.bucket, r.count, m.mrr, m.r1, m.r5, m.r10
                    )),
                    None => s.push_str(&format!("  {:<12} {:>6} {:>8} {:>8} {:>8} {:>8}\n", r.bucket, 0, "-", "-", "-", "-")),
                }
            }
        }
        s
    }
}

/// Ranks each pair's description against the full index, with its own
/// snippet as the only correct answer.
pub fn evaluate(
    ckpt: &Checkpoint,
    index: &SearchIndex,
    pairs: &[CorpusPair],
    spec: &BucketSpec,
) -> Result<EvalReport, SearchError> {
    let max_len = ckpt.model.config.max_query_len;
    let usable: Vec<&CorpusPair> = pairs.iter().filter(|p| !p.query.is_empty()).collect();
    let encoded: Vec<Vec<u32>> = usable
        .iter()
        .map(|p| encode_sequence(&p.query, &ckpt.query_vocab, max_len))
        .collect();
    let vectors = ckpt.model.embed_queries(&encoded)?;
    let mut by_id: HashMap<&str, usize> = HashMap::new();
    for (i, p) in usable.iter().enumerate() {
        by_id.insert(&p.id, i);
    }
    let queries: Vec<Option<ndarray::ArrayView1<'_, f32>>> = pairs
        .iter()
        .map(|p| by_id.get(p.id.as_str()).map(|&i| vectors.row(i)))
        .collect();
    evaluate_rows(index, pairs, &queries, spec)
}

/// Like [`evaluate`] with query vectors supplied directly, one row per
/// pair.
pub fn evaluate_vectors(
    index: &SearchIndex,
    pairs: &[CorpusPair],
    queries: &Array2<f32>,
    spec: &BucketSpec,
) -> Result<EvalReport, SearchError> {
    let rows: Vec<_> = queries.axis_iter(Axis(0)).map(Some).collect();
    evaluate_rows(index, pairs, &rows, spec)
}

fn evaluate_rows(
    index: &SearchIndex,
    pairs: &[CorpusPair],
    queries: &[Option<ndarray::ArrayView1<'_, f32>>],
    spec: &BucketSpec,
) -> Result<EvalReport, SearchError> {
    spec.validate()?;
    assert_eq!(pairs.len(), queries.len(), "one query vector per pair");
    let rows: HashMap<&str, usize> = index
        .snippets
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut outcomes = Vec::with_capacity(pairs.len());
    // (rank, comment length, snippet) per ranked query
    let mut ranked: Vec<(usize, usize, &SnippetMeta)> = Vec::new();
    for (p, q) in pairs.iter().zip(queries) {
        let result = match (q, rows.get(p.id.as_str())) {
            (None, _) => Err("query is empty after tokenization".to_string()),
            (_, None) => Err("ground-truth snippet is not in the index".to_string()),
            (Some(q), Some(&row)) => index.rank_of(*q, row).map(|r| (r, row)).map_err(|e| e.to_string()),
        };
        match result {
            Ok((rank, row)) => {
                ranked.push((rank, p.query.len(), &index.snippets[row]));
                outcomes.push(QueryOutcome {
                    id: p.id.clone(),
                    rank: Some(rank),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("excluding query {}: {e}", p.id);
                outcomes.push(QueryOutcome {
                    id: p.id.clone(),
                    rank: None,
                    error: Some(e),
                });
            }
        }
    }
    let all: Vec<Option<usize>> = ranked.iter().map(|r| Some(r.0)).collect();
    let overall = Metrics::from_ranks(&all)?;
    let buckets = spec
        .dimensions()
        .into_iter()
        .map(|(name, edges)| {
            let mut groups: Vec<Vec<Option<usize>>> = vec![Vec::new(); edges.len() + 1];
            for &(rank, comment_len, s) in &ranked {
                let v = match name {
                    "comment_length" => comment_len,
                    "code_length" => s.code_line_count,
                    "node_count" => s.vfg_node_count,
                    _ => s.vfg_diameter,
                };
                groups[bucket_of(edges, v)].push(Some(rank));
            }
            BucketTable {
                dimension: name.to_string(),
                rows: groups
                    .iter()
                    .enumerate()
                    .map(|(b, g)| BucketRow {
                        bucket: bucket_label(edges, b),
                        count: g.len(),
                        metrics: Metrics::from_ranks(g).ok(),
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(EvalReport {
        index_size: index.len(),
        queries: overall.queries,
        excluded: pairs.len() - overall.queries,
        mrr: overall.mrr,
        r1: overall.r1,
        r5: overall.r5,
        r10: overall.r10,
        buckets,
        outcomes,
    })
}
