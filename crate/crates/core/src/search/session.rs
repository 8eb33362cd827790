use serde::{Deserialize, Serialize};

use super::{mean_reciprocal_rank, success_rate_at_k, SearchError};

/// A user's search session as exported by the web interface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSession {
    pub session_id: String,
    pub history: Vec<HistoryEntry>,
    #[serde(default)]
    pub labels: Vec<SessionLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub query: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    /// Snippet ids in rank order.
    pub result_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLabel {
    pub query: String,
    pub snippet_id: String,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub session_id: String,
    pub labeled_queries: usize,
    pub success_at_10: f64,
    pub mrr: f64,
}

/// Accepts a single session object or an array of them.
pub fn parse_sessions(text: &str) -> Result<Vec<SearchSession>, SearchError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(SearchSession),
        Many(Vec<SearchSession>),
    }
    match serde_json::from_str(text).map_err(|e| SearchError::Session(e.to_string()))? {
        OneOrMany::One(s) => Ok(vec![s]),
        OneOrMany::Many(v) => Ok(v),
    }
}

/// Scores every query that carries at least one label. A query's rank is
/// the best position of a snippet labeled relevant in that query's most
/// recent result list; a query with no relevant result is a miss. Later
/// labels for the same (query, snippet) replace earlier ones.
pub fn score_session(s: &SearchSession) -> Result<SessionScore, SearchError> {
    let mut queries: Vec<&str> = Vec::new();
    for l in &s.labels {
        if !queries.contains(&l.query.as_str()) {
            queries.push(&l.query);
        }
    }
    let mut ranks = Vec::with_capacity(queries.len());
    for q in queries {
        let entry = s.history.iter().rev().find(|h| h.query == q).ok_or_else(|| {
            SearchError::Session(format!("session {}: label for query {q:?} that was never run", s.session_id))
        })?;
        let mut best: Option<usize> = None;
        for (pos, id) in entry.result_ids.iter().enumerate() {
            let last = s.labels.iter().rev().find(|l| l.query == q && &l.snippet_id == id);
            if last.is_some_and(|l| l.relevant) {
                best = Some(pos + 1);
                break;
            }
        }
        for l in s.labels.iter().filter(|l| l.query == q) {
            if !entry.result_ids.contains(&l.snippet_id) {
                return Err(SearchError::Session(format!(
                    "session {}: snippet {} labeled for {q:?} was not among its results",
                    s.session_id, l.snippet_id
                )));
            }
        }
        ranks.push(best);
    }
    Ok(SessionScore {
        session_id: s.session_id.clone(),
        labeled_queries: ranks.len(),
        success_at_10: success_rate_at_k(&ranks, 10)?,
        mrr: mean_reciprocal_rank(&ranks)?,
    })
}
