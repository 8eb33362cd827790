//! Index construction, top-k retrieval, evaluation metrics, robustness
//! bucketing and user-session scoring.

mod eval;
mod index;
mod metrics;
mod session;

use ndarray::Array1;
use thiserror::Error;

pub use eval::{evaluate, evaluate_vectors, BucketRow, BucketSpec, BucketTable, EvalReport, QueryOutcome};
pub use index::{build_index, Hit, SearchIndex, SnippetMeta};
pub use metrics::{mean_reciprocal_rank, success_rate_at_k, Metrics};
pub use session::{parse_sessions, score_session, HistoryEntry, SearchSession, SessionLabel, SessionScore};

use crate::nn::{Checkpoint, NnError};
use crate::text::{encode_sequence, tokenize_query};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("vector has dimension {found}, index expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("query is empty after tokenization")]
    EmptyQuery,
    #[error("no queries to score")]
    EmptyQuerySet,
    #[error("index was built by model {index}, checkpoint is {checkpoint}")]
    VersionMismatch { index: String, checkpoint: String },
    #[error("bad bucket spec: {0}")]
    BucketSpec(String),
    #[error("bad session file: {0}")]
    Session(String),
    #[error(transparent)]
    Nn(NnError),
}

impl From<NnError> for SearchError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::EmptyQuery => SearchError::EmptyQuery,
            NnError::ZeroVector => SearchError::ZeroVector,
        }
    }
}

/// A checkpoint paired with an index built by that same checkpoint.
#[derive(Debug)]
pub struct Engine {
    pub checkpoint: Checkpoint,
    pub index: SearchIndex,
}

impl Engine {
    /// Fails unless the index records this checkpoint's version hash.
    pub fn new(checkpoint: Checkpoint, index: SearchIndex) -> Result<Self, SearchError> {
        let version = checkpoint.version();
        if index.model_version != version {
            return Err(SearchError::VersionMismatch {
                index: index.model_version.clone(),
                checkpoint: version,
            });
        }
        Ok(Engine { checkpoint, index })
    }

    pub fn embed_query(&self, text: &str) -> Result<Array1<f32>, SearchError> {
        embed_query(&self.checkpoint, text)
    }

    pub fn search(&self, text: &str, k: usize) -> Result<Vec<Hit>, SearchError> {
        if k == 0 {
            return Err(SearchError::InvalidK);
        }
        let q = self.embed_query(text)?;
        self.index.search_vector(q.view(), k)
    }
}

/// Description vector for free text.
pub fn embed_query(ckpt: &Checkpoint, text: &str) -> Result<Array1<f32>, SearchError> {
    let tokens = tokenize_query(text);
    if tokens.is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    let ids = encode_sequence(&tokens, &ckpt.query_vocab, ckpt.model.config.max_query_len);
    let m = ckpt.model.embed_queries(&[ids])?;
    Ok(m.row(0).to_owned())
}
