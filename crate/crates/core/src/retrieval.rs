//! Okapi BM25 over a pair collection, queryable by intent or by code.
//!
//! score(q, d) = Σ_t IDF(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! with IDF(t) = ln(1 + (N − df + 0.5) / (df + 0.5)), which is never negative.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_atomic, CorpusError};
use crate::pair::NlCodePair;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

const INDEX_FORMAT: &str = "apiknow-bm25";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Intent,
    Code,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Intent => "intent",
            Target::Code => "code",
        })
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intent" => Ok(Target::Intent),
            "code" => Ok(Target::Code),
            other => Err(format!("unknown retrieval target `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate document id {0}")]
    DuplicateDocId(String),
    #[error("cannot index an empty collection")]
    EmptyCollection,
    #[error("invalid BM25 parameters k1={k1} b={b}")]
    InvalidParameters { k1: f64, b: f64 },
    #[error("unsupported index file: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] CorpusError),
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lower-cases and splits text into terms. Code drops every character that
/// is not alphanumeric or `_`; intents split on whitespace and trim
/// punctuation from each end of a word.
pub fn tokenize(text: &str, target: Target) -> Vec<String> {
    let lowered = text.to_lowercase();
    match target {
        Target::Code => lowered
            .split(|c: char| !is_token_char(c))
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect(),
        Target::Intent => lowered
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !is_token_char(c)))
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub length: usize,
}

impl TokenizedDoc {
    pub fn new(doc_id: impl Into<String>, text: &str, target: Target) -> Self {
        let tokens = tokenize(text, target);
        TokenizedDoc {
            doc_id: doc_id.into(),
            length: tokens.len(),
            tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    /// Index into the sorted document id table.
    pub doc: u32,
    pub tf: u32,
}

/// Immutable inverted index. Documents are numbered in ascending `doc_id`
/// order so posting lists are sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub target: Target,
    pub k1: f64,
    pub b: f64,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    index: Bm25Index,
}

impl Bm25Index {
    pub fn build(pairs: &[NlCodePair], target: Target) -> Result<Self, IndexError> {
        Self::build_with(pairs, target, DEFAULT_K1, DEFAULT_B)
    }

    pub fn build_with(
        pairs: &[NlCodePair],
        target: Target,
        k1: f64,
        b: f64,
    ) -> Result<Self, IndexError> {
        let docs: Vec<TokenizedDoc> = pairs
            .iter()
            .map(|p| TokenizedDoc::new(p.pair_id.clone(), p.text_for(target), target))
            .collect();
        Self::from_docs(docs, target, k1, b)
    }

    pub fn from_docs(
        mut docs: Vec<TokenizedDoc>,
        target: Target,
        k1: f64,
        b: f64,
    ) -> Result<Self, IndexError> {
        if !(k1 > 0.0 && k1.is_finite() && (0.0..=1.0).contains(&b)) {
            return Err(IndexError::InvalidParameters { k1, b });
        }
        if docs.is_empty() {
            return Err(IndexError::EmptyCollection);
        }
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = docs.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(IndexError::DuplicateDocId(w[0].doc_id.clone()));
        }

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        let mut doc_ids = Vec::with_capacity(docs.len());
        for (i, doc) in docs.into_iter().enumerate() {
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for token in &doc.tokens {
                *counts.entry(token).or_default() += 1;
            }
            for (term, tf) in counts {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push(Posting { doc: i as u32, tf });
            }
            doc_lengths.push(doc.length as u32);
            doc_ids.push(doc.doc_id);
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;

        Ok(Bm25Index {
            target,
            k1,
            b,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<usize> {
        let i = self
            .doc_ids
            .binary_search_by(|d| d.as_str().cmp(doc_id))
            .ok()?;
        Some(self.doc_lengths[i] as usize)
    }

    pub fn postings(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.postings
    }

    /// `(doc_id, tf)` postings of one term.
    pub fn term_postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|list| {
                list.iter()
                    .map(|p| (self.doc_ids[p.doc as usize].as_str(), p.tf))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top `k` documents by BM25 score, descending, ties by ascending id.
    /// Documents sharing no term with the query are never returned.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        self.search_refs(query, k)
            .into_iter()
            .map(|(id, s)| (id.to_string(), s))
            .collect()
    }

    pub fn search_refs(&self, query: &str, k: usize) -> Vec<(&str, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut scores: HashMap<u32, f64> = HashMap::new();
        // Each query token occurrence contributes once, in query order.
        for token in tokenize(query, self.target) {
            let Some(list) = self.postings.get(&token) else {
                continue;
            };
            let idf = self.idf(list.len());
            for p in list {
                let tf = p.tf as f64;
                let dl = self.doc_lengths[p.doc as usize] as f64;
                let norm = self.k1 * (1.0 - self.b + self.b * dl / self.avg_doc_length);
                *scores.entry(p.doc).or_insert(0.0) += idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
            .into_iter()
            .map(|(d, s)| (self.doc_ids[d as usize].as_str(), s))
            .collect()
    }

    /// The persisted form, a versioned JSON document.
    pub fn to_json(&self) -> Vec<u8> {
        let file = IndexFile {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            index: self.clone(),
        };
        serde_json::to_vec(&file).expect("index serializes to JSON")
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        write_atomic(path, &self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        let file: IndexFile = serde_json::from_slice(&bytes)
            .map_err(|e| IndexError::UnsupportedFormat(e.to_string()))?;
        if file.format != INDEX_FORMAT || file.version != INDEX_VERSION {
            return Err(IndexError::UnsupportedFormat(format!(
                "{} v{}",
                file.format, file.version
            )));
        }
        Ok(file.index)
    }
}

/// Distinct-id check used before building from loaded pairs.
pub fn ensure_unique_ids(pairs: &[NlCodePair]) -> Result<(), IndexError> {
    let mut seen = HashSet::new();
    for p in pairs {
        if !seen.insert(p.pair_id.as_str()) {
            return Err(IndexError::DuplicateDocId(p.pair_id.clone()));
        }
    }
    Ok(())
}
