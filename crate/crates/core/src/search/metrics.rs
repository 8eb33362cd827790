use serde::{Deserialize, Serialize};

use super::SearchError;

/// Fraction of queries whose ground truth ranks within `k`. `None` is a
/// miss.
pub fn success_rate_at_k(ranks: &[Option<usize>], k: usize) -> Result<f64, SearchError> {
    if ranks.is_empty() {
        return Err(SearchError::EmptyQuerySet);
    }
    let hits = ranks.iter().filter(|r| matches!(r, Some(r) if *r <= k)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Mean of `1 / rank`; misses contribute 0.
pub fn mean_reciprocal_rank(ranks: &[Option<usize>]) -> Result<f64, SearchError> {
    if ranks.is_empty() {
        return Err(SearchError::EmptyQuerySet);
    }
    let sum: f64 = ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum();
    Ok(sum / ranks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub queries: usize,
    pub mrr: f64,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
}

impl Metrics {
    pub fn from_ranks(ranks: &[Option<usize>]) -> Result<Self, SearchError> {
        Ok(Metrics {
            queries: ranks.len(),
            mrr: mean_reciprocal_rank(ranks)?,
            r1: success_rate_at_k(ranks, 1)?,
            r5: success_rate_at_k(ranks, 5)?,
            r10: success_rate_at_k(ranks, 10)?,
        })
    }
}
