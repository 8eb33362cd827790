//! Tokenization, vocabularies and corpus ingestion.
//!
//! Queries come from the first sentence of a function's leading comment.
//! Pairs are filtered by query length, code length, constructor/test
//! heuristics and exact duplication before anything else sees them.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Error)]
pub enum TextError {
    #[error("comment is empty once decoration is stripped")]
    EmptyComment,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("vocabulary file line {line}: {message}")]
    VocabFormat { line: usize, message: String },
    #[error("invalid reject pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },
}

/// Splits an identifier at `_`, other non-alphanumerics and camel-case
/// boundaries, lowercasing every piece. `HTTPServer` splits as
/// `http`, `server`.
pub fn split_identifier(token: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in token.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (prev.is_lowercase() || prev.is_ascii_digit()) && cur.is_uppercase()
                || prev.is_uppercase() && cur.is_uppercase() && next_lower;
            if boundary {
                out.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        if start < chars.len() {
            out.push(chars[start..].iter().collect::<String>().to_lowercase());
        }
    }
    out.retain(|s| !s.is_empty());
    out
}

/// Query tokens: whitespace words, each split as an identifier.
pub fn tokenize_query(text: &str) -> Vec<String> {
    text.split_whitespace().flat_map(split_identifier).collect()
}

fn strip_decoration(line: &str) -> &str {
    let mut s = line.trim();
    for prefix in ["/**", "/*!", "/*", "///", "//!", "//"] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest;
            break;
        }
    }
    s = s.trim_end();
    if let Some(rest) = s.strip_suffix("*/") {
        s = rest;
    }
    s.trim_start_matches(|c: char| c == '*' || c == '-' || c.is_whitespace())
        .trim()
}

/// First sentence of a comment, with `/* */`, `//`, leading `*` and
/// leading dashes removed. A sentence ends at `.`, `!` or `?` followed by
/// whitespace or the end of the text.
pub fn first_sentence(comment: &str) -> Result<String, TextError> {
    let joined = comment
        .lines()
        .map(strip_decoration)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    let chars: Vec<char> = joined.chars().collect();
    let mut end = chars.len();
    for (i, c) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace()) {
            end = i;
            break;
        }
    }
    let sentence: String = chars[..end].iter().collect();
    let sentence = sentence.split_whitespace().collect::<Vec<_>>().join(" ");
    if sentence.is_empty() {
        Err(TextError::EmptyComment)
    } else {
        Ok(sentence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ConstructorOrTest,
    RejectPattern,
    EmptyComment,
    QueryTooShort,
    QueryTooLong,
    CodeTooShort,
    CodeTooLong,
    Duplicate,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("reason serializes");
        write!(f, "{}", s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub min_query_words: usize,
    pub max_query_words: usize,
    pub min_code_lines: usize,
    pub max_code_lines: usize,
    /// Comments matching any of these are dropped as unrelated to the
    /// function's purpose (licence banners, TODOs, ...). Empty by default.
    pub reject_patterns: Vec<Regex>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_query_words: 3,
            max_query_words: 30,
            min_code_lines: 5,
            max_code_lines: 30,
            reject_patterns: Vec::new(),
        }
    }
}

impl FilterConfig {
    /// One regular expression per line; blank lines and `#` comments skipped.
    pub fn load_reject_patterns(&mut self, text: &str) -> Result<(), TextError> {
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let re = Regex::new(line).map_err(|e| TextError::Pattern {
                pattern: line.to_string(),
                message: e.to_string(),
            })?;
            self.reject_patterns.push(re);
        }
        Ok(())
    }
}

/// Everything the filter looks at for one pair.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub query: &'a str,
    pub code: &'a str,
    pub function: Option<&'a str>,
    pub file_stem: Option<&'a str>,
}

pub fn code_line_count(code: &str) -> usize {
    code.lines().filter(|l| !l.trim().is_empty()).count()
}

fn is_constructor_or_test(function: &str, file_stem: Option<&str>) -> bool {
    let lower = function.to_lowercase();
    lower.starts_with("test")
        || lower.ends_with("test")
        || file_stem.is_some_and(|stem| stem.eq_ignore_ascii_case(function))
}

fn normalized_digest(query: &str, code: &str) -> [u8; 32] {
    let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let mut h = Sha256::new();
    h.update(norm(query).as_bytes());
    h.update([0u8]);
    h.update(norm(code).as_bytes());
    h.finalize().into()
}

/// Accepts or rejects a pair. Accepted pairs are recorded in `seen`, so
/// the first of several duplicates wins.
pub fn filter_pair(
    c: &Candidate<'_>,
    seen: &mut HashSet<[u8; 32]>,
    cfg: &FilterConfig,
) -> Result<(), RejectReason> {
    if c.function
        .is_some_and(|name| is_constructor_or_test(name, c.file_stem))
    {
        return Err(RejectReason::ConstructorOrTest);
    }
    if cfg.reject_patterns.iter().any(|re| re.is_match(c.query)) {
        return Err(RejectReason::RejectPattern);
    }
    let words = c.query.split_whitespace().count();
    if words < cfg.min_query_words {
        return Err(RejectReason::QueryTooShort);
    }
    if words > cfg.max_query_words {
        return Err(RejectReason::QueryTooLong);
    }
    let lines = code_line_count(c.code);
    if lines < cfg.min_code_lines {
        return Err(RejectReason::CodeTooShort);
    }
    if lines > cfg.max_code_lines {
        return Err(RejectReason::CodeTooLong);
    }
    if !seen.insert(normalized_digest(c.query, c.code)) {
        return Err(RejectReason::Duplicate);
    }
    Ok(())
}

/// Token ids: `PAD` = 0, `UNK` = 1, then tokens by descending frequency
/// with ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn build<I, S>(tokens: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        assert!(max_size >= 2, "vocabulary needs room for PAD and UNK");
        let mut counts: HashMap<String, u64> = HashMap::new();
        for t in tokens {
            *counts.entry(t.as_ref().to_string()).or_default() += 1;
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - 2);
        Self::from_ranked(ranked)
    }

    fn from_ranked(ranked: Vec<(String, u64)>) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut freqs = vec![0, 0];
        for (t, f) in ranked {
            tokens.push(t);
            freqs.push(f);
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            freqs,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn id(&self, token: &str) -> u32 {
        match self.index.get(token) {
            Some(&id) if id > UNK => id,
            _ => UNK,
        }
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// `token<TAB>frequency` per line, reserved entries omitted.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (t, f) in self.tokens.iter().zip(&self.freqs).skip(2) {
            s.push_str(t);
            s.push('\t');
            s.push_str(&f.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self, TextError> {
        let mut ranked = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |message: &str| TextError::VocabFormat {
                line: i + 1,
                message: message.to_string(),
            };
            let (tok, freq) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let freq = freq.trim().parse().map_err(|_| bad("frequency is not a number"))?;
            ranked.push((tok.to_string(), freq));
        }
        Ok(Self::from_ranked(ranked))
    }

    /// Hex sha256 of the TSV form; identifies the vocabulary in checkpoints.
    pub fn digest(&self) -> String {
        hex_digest(self.to_tsv().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Maps tokens to ids, truncating or padding to exactly `max_len`.
pub fn encode_sequence<S: AsRef<str>>(tokens: &[S], v: &Vocabulary, max_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = tokens.iter().take(max_len).map(|t| v.id(t.as_ref())).collect();
    ids.resize(max_len, PAD);
    ids
}

/// One corpus line as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub query: String,
    pub ir: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPair {
    pub id: String,
    /// The extracted first sentence.
    pub query_text: String,
    pub query: Vec<String>,
    pub ir_text: String,
    pub code_text: String,
    pub code_line_count: usize,
    pub function: Option<String>,
}

impl CorpusPair {
    pub fn to_record(&self) -> RawRecord {
        RawRecord {
            id: self.id.clone(),
            query: self.query_text.clone(),
            ir: self.ir_text.clone(),
            code: self.code_text.clone(),
            function: self.function.clone(),
            file: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterSummary {
    pub accepted: usize,
    pub rejected: std::collections::BTreeMap<RejectReason, usize>,
}

/// Parses JSONL records, one per line (blank lines skipped).
pub fn parse_records(text: &str) -> Result<Vec<RawRecord>, TextError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(line).map_err(|e| TextError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Extracts queries and filters raw records, keeping input order.
pub fn filter_records(records: Vec<RawRecord>, cfg: &FilterConfig) -> (Vec<CorpusPair>, FilterSummary) {
    let mut seen = HashSet::new();
    let mut summary = FilterSummary::default();
    let mut pairs = Vec::new();
    for rec in records {
        let verdict = first_sentence(&rec.query)
            .map_err(|_| RejectReason::EmptyComment)
            .and_then(|sentence| {
                let stem = rec.file.as_deref().and_then(|f| {
                    Path::new(f).file_stem().and_then(|s| s.to_str())
                });
                let c = Candidate {
                    query: &sentence,
                    code: &rec.code,
                    function: rec.function.as_deref(),
                    file_stem: stem,
                };
                filter_pair(&c, &mut seen, cfg).map(|_| sentence)
            });
        match verdict {
            Ok(sentence) => {
                summary.accepted += 1;
                pairs.push(CorpusPair {
                    query: tokenize_query(&sentence),
                    query_text: sentence,
                    code_line_count: code_line_count(&rec.code),
                    id: rec.id,
                    ir_text: rec.ir,
                    code_text: rec.code,
                    function: rec.function,
                });
            }
            Err(reason) => {
                log::debug!("rejected {}: {reason}", rec.id);
                *summary.rejected.entry(reason).or_default() += 1;
            }
        }
    }
    (pairs, summary)
}

/// Reads and filters a JSONL corpus file.
pub fn load_corpus(path: &Path, cfg: &FilterConfig) -> Result<(Vec<CorpusPair>, FilterSummary), TextError> {
    let io = |source| TextError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(io)?);
        text.push('\n');
    }
    let records = parse_records(&text)?;
    if records.is_empty() {
        log::warn!("{} contains no records", path.display());
    }
    let (pairs, summary) = filter_records(records, cfg);
    for (reason, n) in &summary.rejected {
        log::info!("{}: rejected {n} pair(s) as {reason}", path.display());
    }
    Ok((pairs, summary))
}

/// Seeded shuffle split; each side keeps the input's relative order.
pub fn split<T: Clone>(items: &[T], test_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (items.len() as f64 * test_fraction).round() as usize;
    let mut test_idx = idx[..n_test.min(items.len())].to_vec();
    let mut train_idx = idx[n_test.min(items.len())..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    (
        train_idx.into_iter().map(|i| items[i].clone()).collect(),
        test_idx.into_iter().map(|i| items[i].clone()).collect(),
    )
}
