use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::nn::{Checkpoint, GraphInput};
use crate::prepare::PreparedPair;
use crate::write_atomic;

const MAGIC: &[u8; 8] = b"VFGINDX1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetMeta {
    pub id: String,
    pub code_line_count: usize,
    pub vfg_node_count: usize,
    pub vfg_diameter: usize,
    pub code_text: String,
}

impl SnippetMeta {
    pub fn of(p: &PreparedPair) -> Self {
        SnippetMeta {
            id: p.pair.id.clone(),
            code_line_count: p.pair.code_line_count,
            vfg_node_count: p.stats.node_count,
            vfg_diameter: p.stats.diameter,
            code_text: p.pair.code_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub id: String,
    /// Row in the index.
    #[serde(skip)]
    pub index: usize,
    pub rank: usize,
    pub score: f32,
}

/// Unit-length code vectors with per-snippet metadata, searched by
/// exhaustive cosine scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchIndex {
    pub model_version: String,
    pub snippets: Vec<SnippetMeta>,
    vectors: Array2<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    model_version: String,
    snippets: Vec<SnippetMeta>,
}

/// Result order: higher score first, then ascending snippet id, then row.
#[derive(PartialEq)]
struct Ranked<'a>(f32, &'a str, usize);

impl Eq for Ranked<'_> {}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| self.1.cmp(other.1))
            .then(self.2.cmp(&other.2))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn unit(v: ArrayView1<'_, f32>) -> Result<Array1<f32>, SearchError> {
    let n = v.dot(&v).sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(SearchError::ZeroVector);
    }
    Ok(v.mapv(|x| x / n))
}

impl SearchIndex {
    pub fn new(dim: usize, model_version: impl Into<String>) -> Self {
        SearchIndex {
            model_version: model_version.into(),
            snippets: Vec::new(),
            vectors: Array2::zeros((0, dim)),
        }
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vector(&self, row: usize) -> ArrayView1<'_, f32> {
        self.vectors.row(row)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.snippets.iter().position(|s| s.id == id)
    }

    pub fn snippet(&self, id: &str) -> Option<&SnippetMeta> {
        self.snippets.iter().find(|s| s.id == id)
    }

    /// Appends a snippet; its vector is normalized to unit length.
    pub fn insert(&mut self, meta: SnippetMeta, v: ArrayView1<'_, f32>) -> Result<(), SearchError> {
        if v.len() != self.dim() {
            return Err(SearchError::Dimension {
                expected: self.dim(),
                found: v.len(),
            });
        }
        let u = unit(v)?;
        self.vectors
            .push_row(u.view())
            .expect("dimension checked above");
        self.snippets.push(meta);
        Ok(())
    }

    /// Cosine scores of every stored vector against `q` (unit-normalized
    /// here).
    pub fn scores(&self, q: ArrayView1<'_, f32>) -> Result<Array1<f32>, SearchError> {
        if q.len() != self.dim() {
            return Err(SearchError::Dimension {
                expected: self.dim(),
                found: q.len(),
            });
        }
        let u = unit(q)?;
        Ok(self.vectors.dot(&u))
    }

    /// Top `k` by cosine, ties broken by ascending snippet id.
    pub fn search_vector(&self, q: ArrayView1<'_, f32>, k: usize) -> Result<Vec<Hit>, SearchError> {
        if k == 0 {
            return Err(SearchError::InvalidK);
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let scores = self.scores(q)?;
        // max-heap on "worse", holding the best k seen so far
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
        for (i, &s) in scores.iter().enumerate() {
            let cand = Ranked(s, &self.snippets[i].id, i);
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().unwrap() {
                heap.pop();
                heap.push(cand);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .enumerate()
            .map(|(r, Ranked(score, id, index))| Hit {
                id: id.to_string(),
                index,
                rank: r + 1,
                score,
            })
            .collect())
    }

    /// 1-based rank the row would get in a full search for `q`.
    pub fn rank_of(&self, q: ArrayView1<'_, f32>, row: usize) -> Result<usize, SearchError> {
        let scores = self.scores(q)?;
        let target = Ranked(scores[row], &self.snippets[row].id, row);
        Ok(1 + scores
            .iter()
            .enumerate()
            .filter(|(i, &s)| Ranked(s, &self.snippets[*i].id, *i) < target)
            .count())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            dim: self.dim(),
            model_version: self.model_version.clone(),
            snippets: self.snippets.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + self.vectors.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for &x in self.vectors.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SearchError> {
        let corrupt = |m: &str| SearchError::CorruptIndex(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let start = 16usize.checked_add(hlen).filter(|&s| s <= bytes.len()).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..start]).map_err(|e| corrupt(&e.to_string()))?;
        let n = header.snippets.len();
        let data = &bytes[start..];
        if data.len() != n * header.dim * 4 {
            return Err(corrupt("vector data length does not match header"));
        }
        let values: Vec<f32> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let vectors = Array2::from_shape_vec((n, header.dim), values).map_err(|e| corrupt(&e.to_string()))?;
        Ok(SearchIndex {
            model_version: header.model_version,
            snippets: header.snippets,
            vectors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SearchError> {
        write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SearchError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Embeds every prepared snippet with the checkpoint's graph encoder.
/// Snippets whose vector degenerates to zero are logged and skipped.
pub fn build_index(ckpt: &Checkpoint, pairs: &[PreparedPair]) -> SearchIndex {
    let inputs: Vec<GraphInput> = pairs
        .iter()
        .map(|p| GraphInput::from_vfg(&p.graph, &ckpt.ir_vocab))
        .collect();
    let refs: Vec<&GraphInput> = inputs.iter().collect();
    let vectors = ckpt.model.embed_graphs(&refs);
    let mut index = SearchIndex::new(ckpt.model.config.hidden_dim, ckpt.version());
    let mut skipped = 0;
    for (p, v) in pairs.iter().zip(vectors.axis_iter(Axis(0))) {
        if let Err(e) = index.insert(SnippetMeta::of(p), v) {
            log::warn!("skipping {}: {e}", p.pair.id);
            skipped += 1;
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} snippet(s) left out of the index");
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn meta(id: &str) -> SnippetMeta {
        SnippetMeta {
            id: id.into(),
            code_line_count: 5,
            vfg_node_count: 3,
            vfg_diameter: 2,
            code_text: format!("// {id}"),
        }
    }

    fn sample() -> SearchIndex {
        let mut ix = SearchIndex::new(2, "v");
        ix.insert(meta("a"), array![1.0, 0.0].view()).unwrap();
        ix.insert(meta("b"), array![0.0, 3.0].view()).unwrap();
        ix.insert(meta("c"), array![2.0, 0.0].view()).unwrap();
        ix
    }

    #[test]
    fn vectors_are_unit() {
        let ix = sample();
        for r in 0..ix.len() {
            let v = ix.vector(r);
            assert!((v.dot(&v) - 1.0).abs() < 1e-6);
        }
        assert!(matches!(
            SearchIndex::new(2, "v").insert(meta("z"), array![0.0, 0.0].view()),
            Err(SearchError::ZeroVector)
        ));
    }

    #[test]
    fn ties_break_by_id() {
        let mut ix = SearchIndex::new(2, "v");
        ix.insert(meta("c"), array![2.0, 0.0].view()).unwrap();
        ix.insert(meta("b"), array![0.0, 3.0].view()).unwrap();
        ix.insert(meta("a"), array![1.0, 0.0].view()).unwrap();
        let hits = ix.search_vector(array![1.0, 0.0].view(), 10).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
        assert_eq!(hits[0].index, 2);
        let ix = sample();
        let hits = ix.search_vector(array![1.0, 0.0].view(), 10).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
        assert_eq!(hits[0].score, 1.0);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(ix.rank_of(array![1.0, 0.0].view(), 2).unwrap(), 2);
        assert_eq!(ix.rank_of(array![1.0, 0.0].view(), 1).unwrap(), 3);
    }

    #[test]
    fn empty_index_and_bad_k() {
        let ix = SearchIndex::new(2, "v");
        assert!(ix.search_vector(array![1.0, 0.0].view(), 3).unwrap().is_empty());
        assert!(matches!(sample().search_vector(array![1.0, 0.0].view(), 0), Err(SearchError::InvalidK)));
    }

    #[test]
    fn persistence_round_trip() {
        let ix = sample();
        let bytes = ix.to_bytes();
        assert_eq!(bytes, sample().to_bytes());
        let back = SearchIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, ix);
        assert!(SearchIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.index");
        ix.save(&p).unwrap();
        assert_eq!(SearchIndex::load(&p).unwrap(), ix);
    }
}
