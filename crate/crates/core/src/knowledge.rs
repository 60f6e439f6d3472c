//! Topic-tagged article corpus with BM25 retrieval over overlapping chunks.
//!
//! Chunking splits a body on whitespace into tokens and emits windows of
//! `chunk_tokens` tokens starting every `chunk_tokens - overlap_tokens`
//! tokens, for as long as the start lies inside the document. A chunk's text
//! is the exact body slice from its first token to its last.
//!
//! Scoring treats every chunk as a retrieval unit:
//!
//! ```text
//! score(q, c) = sum over distinct query terms t of
//!     idf(t) * tf(t, c) * (k1 + 1) / (tf(t, c) + k1 * (1 - b + b * len(c) / avg_len))
//! idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! with `k1 = 1.2`, `b = 0.75`, `N` the number of chunks and `len` counted in
//! index terms. Terms are lowercase runs of alphanumeric characters.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CHUNK_TOKENS: usize = 300;
pub const DEFAULT_OVERLAP_TOKENS: usize = 50;
pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("chunk budget {chunk_tokens} must exceed overlap {overlap_tokens}")]
    InvalidChunking { chunk_tokens: usize, overlap_tokens: usize },
    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("unknown topic {0:?}; expected Drought, Wildfire, Crop or Practices")]
    UnknownTopic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Topic {
    Drought,
    Wildfire,
    Crop,
    Practices,
}

impl Topic {
    pub const ALL: [Topic; 4] = [Topic::Drought, Topic::Wildfire, Topic::Crop, Topic::Practices];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Drought => "Drought",
            Topic::Wildfire => "Wildfire",
            Topic::Crop => "Crop",
            Topic::Practices => "Practices",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "drought" => Ok(Topic::Drought),
            "wildfire" | "wildfires" | "fire" => Ok(Topic::Wildfire),
            "crop" | "crops" => Ok(Topic::Crop),
            "practices" | "practice" | "agricultural practices" => Ok(Topic::Practices),
            _ => Err(KnowledgeError::UnknownTopic(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleDoc {
    pub doc_id: String,
    pub title: String,
    pub topic: Topic,
    pub body: String,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
    pub token_count: usize,
    /// Byte range of `text` inside the document body.
    pub start_byte: usize,
    pub end_byte: usize,
}

/// Splits `body` into overlapping whitespace-token windows.
pub fn chunk_document(
    doc_id: &str,
    body: &str,
    chunk_tokens: usize,
    overlap_tokens: usize,
) -> Result<Vec<Chunk>, KnowledgeError> {
    if chunk_tokens == 0 || overlap_tokens >= chunk_tokens {
        return Err(KnowledgeError::InvalidChunking { chunk_tokens, overlap_tokens });
    }
    let spans = token_spans(body);
    let stride = chunk_tokens - overlap_tokens;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < spans.len() {
        let end = (start + chunk_tokens).min(spans.len());
        let (b0, b1) = (spans[start].0, spans[end - 1].1);
        chunks.push(Chunk {
            doc_id: doc_id.to_string(),
            chunk_index: chunks.len(),
            text: body[b0..b1].to_string(),
            token_count: end - start,
            start_byte: b0,
            end_byte: b1,
        });
        start += stride;
    }
    Ok(chunks)
}

fn token_spans(body: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in body.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, body.len()));
    }
    spans
}

/// Lowercased alphanumeric runs, in order of appearance.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub chunk: Chunk,
    pub score: f64,
    pub title: String,
    pub topic: Topic,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq)]
struct IndexedChunk {
    chunk: Chunk,
    doc: usize,
    len: usize,
    tf: BTreeMap<String, u32>,
}

/// Immutable retrieval index; queries take `&self` and are safe to share.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    docs: Vec<ArticleDoc>,
    chunks: Vec<IndexedChunk>,
    df: BTreeMap<String, u32>,
    avg_len: f64,
}

/// Chunks every document and builds the term statistics.
pub fn index_corpus(docs: &[ArticleDoc], chunk_tokens: usize, overlap_tokens: usize) -> Result<Index, KnowledgeError> {
    if docs.is_empty() {
        return Err(KnowledgeError::EmptyCorpus);
    }
    if chunk_tokens == 0 || overlap_tokens >= chunk_tokens {
        return Err(KnowledgeError::InvalidChunking { chunk_tokens, overlap_tokens });
    }
    let mut ids = BTreeSet::new();
    for d in docs {
        if !ids.insert(d.doc_id.as_str()) {
            return Err(KnowledgeError::DuplicateDocId(d.doc_id.clone()));
        }
    }
    let mut chunks = Vec::new();
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    for (di, d) in docs.iter().enumerate() {
        for chunk in chunk_document(&d.doc_id, &d.body, chunk_tokens, overlap_tokens)? {
            let ts = terms(&chunk.text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &ts {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            chunks.push(IndexedChunk { chunk, doc: di, len: ts.len(), tf });
        }
    }
    let total: usize = chunks.iter().map(|c| c.len).sum();
    let avg_len = if chunks.is_empty() { 0.0 } else { total as f64 / chunks.len() as f64 };
    Ok(Index { docs: docs.to_vec(), chunks, df, avg_len })
}

impl Index {
    pub fn docs(&self) -> &[ArticleDoc] {
        &self.docs
    }

    pub fn doc(&self, doc_id: &str) -> Option<&ArticleDoc> {
        self.docs.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.iter().map(|c| &c.chunk)
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn document_frequency(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.chunks.len() as f64;
        let df = self.document_frequency(term) as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    /// Top `k` chunks for `query`, optionally restricted to one topic.
    ///
    /// Chunks sharing no term with the query are not returned. Equal scores
    /// are ordered by `(doc_id, chunk_index)`.
    pub fn support_arguments(&self, query: &str, topic: Option<Topic>, k: usize) -> Result<Vec<Hit>, KnowledgeError> {
        if k == 0 {
            return Err(KnowledgeError::ZeroK);
        }
        let q: BTreeSet<String> = terms(query).into_iter().collect();
        if q.is_empty() {
            return Err(KnowledgeError::EmptyQuery);
        }
        let weights: Vec<(&String, f64)> = q.iter().map(|t| (t, self.idf(t))).collect();
        let mut scored: Vec<(f64, &IndexedChunk)> = self
            .chunks
            .iter()
            .filter(|c| topic.is_none_or(|t| self.docs[c.doc].topic == t))
            .filter_map(|c| {
                let norm = if self.avg_len > 0.0 { c.len as f64 / self.avg_len } else { 0.0 };
                let mut score = 0.0;
                let mut matched = false;
                for (t, idf) in &weights {
                    let Some(&tf) = c.tf.get(*t) else { continue };
                    matched = true;
                    let tf = tf as f64;
                    score += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * norm));
                }
                matched.then_some((score, c))
            })
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.chunk.doc_id.cmp(&b.1.chunk.doc_id))
                .then_with(|| a.1.chunk.chunk_index.cmp(&b.1.chunk.chunk_index))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, c)| {
                let d = &self.docs[c.doc];
                Hit {
                    chunk: c.chunk.clone(),
                    score,
                    title: d.title.clone(),
                    topic: d.topic,
                    citation: d.citation.clone(),
                }
            })
            .collect())
    }
}
