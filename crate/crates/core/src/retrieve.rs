//! Okapi BM25 over the Vietnamese side of a few-shot pool.
//!
//! score(D, Q) = Σ_{t ∈ set(Q)} idf(t) · f(t,D)·(k1+1) / (f(t,D) + k1·(1 − b + b·|D|/avgdl))
//! idf(t)      = ln((N − n(t) + 0.5) / (n(t) + 0.5) + 1)
//!
//! The `+ 1` inside the logarithm keeps every idf, and so every score,
//! non-negative.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, tokenize_vi, ParallelCorpus, TokenSeq};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_TOP_K: usize = 3;
pub const SNAPSHOT_VERSION: &str = "vnjp-bm25/1";

#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error("retrieval pool is empty")]
    EmptyPool,
    #[error("pair {0}: pool entries need both Vietnamese and Japanese sides")]
    MissingSide(u64),
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidParameters { k1: f64, b: f64 },
    #[error("unknown document id {0}")]
    UnknownDoc(u64),
    #[error("snapshot version {found:?} is not supported (expected {SNAPSHOT_VERSION:?})")]
    SnapshotVersion { found: String },
    #[error("{path}: {message}")]
    Snapshot { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Document {
    id: u64,
    source_vi: String,
    target_ja: String,
    len: u32,
    terms: BTreeMap<String, u32>,
}

/// Immutable BM25 index. Safe to query from many threads at once.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    docs: Vec<Document>,
    by_id: HashMap<u64, usize>,
    df: BTreeMap<String, u32>,
    postings: HashMap<String, Vec<(usize, u32)>>,
    avgdl: f64,
    k1: f64,
    b: f64,
}

/// One few-shot demonstration pulled from the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedExample {
    pub doc_id: u64,
    pub score: f64,
    pub source_vi: String,
    pub target_ja: String,
}

/// Indexes the Vietnamese side of every pool pair; `doc_id` is the pair id.
pub fn build_index(pool: &ParallelCorpus, k1: f64, b: f64) -> Result<Bm25Index, RetrieveError> {
    if !(k1 >= 0.0 && k1.is_finite() && (0.0..=1.0).contains(&b)) {
        return Err(RetrieveError::InvalidParameters { k1, b });
    }
    if pool.is_empty() {
        return Err(RetrieveError::EmptyPool);
    }
    let mut docs = Vec::with_capacity(pool.len());
    for pair in pool.iter() {
        let target_ja = pair.target_ja.clone().ok_or(RetrieveError::MissingSide(pair.id))?;
        let tokens = tokenize_vi(&pair.source_vi);
        let mut terms: BTreeMap<String, u32> = BTreeMap::new();
        for term in tokens.terms() {
            *terms.entry(term.to_owned()).or_default() += 1;
        }
        docs.push(Document {
            id: pair.id,
            source_vi: pair.source_vi.clone(),
            target_ja,
            len: terms.values().sum(),
            terms,
        });
    }
    Ok(Bm25Index::from_documents(docs, k1, b))
}

impl Bm25Index {
    fn from_documents(docs: Vec<Document>, k1: f64, b: f64) -> Self {
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut by_id = HashMap::with_capacity(docs.len());
        for (idx, doc) in docs.iter().enumerate() {
            by_id.insert(doc.id, idx);
            for (term, &tf) in &doc.terms {
                *df.entry(term.clone()).or_default() += 1;
                postings.entry(term.clone()).or_default().push((idx, tf));
            }
        }
        let total_len: u64 = docs.iter().map(|d| d.len as u64).sum();
        let avgdl = total_len as f64 / docs.len() as f64;
        Self {
            docs,
            by_id,
            df,
            postings,
            avgdl,
            k1,
            b,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of documents containing `term`.
    pub fn doc_freq(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn doc_len(&self, doc_id: u64) -> Option<u32> {
        self.by_id.get(&doc_id).map(|&i| self.docs[i].len)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.docs.iter().map(|d| d.id)
    }

    pub fn contains(&self, doc_id: u64) -> bool {
        self.by_id.contains_key(&doc_id)
    }

    /// Vocabulary with document frequencies, sorted by term.
    pub fn document_frequencies(&self) -> &BTreeMap<String, u32> {
        &self.df
    }

    /// Length-normalized term weight for one (term frequency, doc length).
    fn term_weight(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let tf = tf as f64;
        let norm = if self.avgdl > 0.0 {
            1.0 - self.b + self.b * doc_len as f64 / self.avgdl
        } else {
            1.0
        };
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }

    fn example(&self, idx: usize, score: f64) -> RetrievedExample {
        let doc = &self.docs[idx];
        RetrievedExample {
            doc_id: doc.id,
            score,
            source_vi: doc.source_vi.clone(),
            target_ja: doc.target_ja.clone(),
        }
    }

    /// JSON snapshot tagged with [`SNAPSHOT_VERSION`], newline-terminated.
    pub fn snapshot_json(&self) -> String {
        let snapshot = Snapshot {
            version: SNAPSHOT_VERSION.to_owned(),
            k1: self.k1,
            b: self.b,
            avgdl: self.avgdl,
            df: self.df.clone(),
            docs: self.docs.clone(),
        };
        let mut text = serde_json::to_string(&snapshot).expect("snapshot serializes");
        text.push('\n');
        text
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), RetrieveError> {
        std::fs::write(path, self.snapshot_json()).map_err(|e| snapshot_err(path, e))
    }

    /// Parses a snapshot and checks its stored statistics against the ones
    /// recomputed from its documents.
    pub fn from_snapshot_json(text: &str) -> Result<Self, String> {
        let snapshot: Snapshot = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(format!(
                "snapshot version {:?} is not supported (expected {SNAPSHOT_VERSION:?})",
                snapshot.version
            ));
        }
        if snapshot.docs.is_empty() {
            return Err("snapshot has no documents".into());
        }
        let index = Self::from_documents(snapshot.docs, snapshot.k1, snapshot.b);
        if index.df != snapshot.df || index.avgdl != snapshot.avgdl {
            return Err("stored statistics do not match documents".into());
        }
        Ok(index)
    }

    pub fn load_snapshot(path: &Path) -> Result<Self, RetrieveError> {
        let text = std::fs::read_to_string(path).map_err(|e| snapshot_err(path, e))?;
        let snapshot: Snapshot = serde_json::from_str(&text).map_err(|e| snapshot_err(path, e))?;
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(RetrieveError::SnapshotVersion {
                found: snapshot.version,
            });
        }
        Self::from_snapshot_json(&text).map_err(|e| snapshot_err(path, e))
    }
}

fn snapshot_err(path: &Path, e: impl std::fmt::Display) -> RetrieveError {
    RetrieveError::Snapshot {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: String,
    k1: f64,
    b: f64,
    avgdl: f64,
    df: BTreeMap<String, u32>,
    docs: Vec<Document>,
}

/// Inverse document frequency; unseen terms use n(t) = 0.
pub fn idf(index: &Bm25Index, term: &str) -> f64 {
    idf_from_counts(index.doc_count() as u64, index.doc_freq(term) as u64)
}

/// `ln((N − n + 0.5) / (n + 0.5) + 1)`
pub fn idf_from_counts(doc_count: u64, doc_freq: u64) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

/// Distinct query terms in sorted order, so every scoring path sums
/// contributions in the same order.
fn query_terms(query: &TokenSeq) -> BTreeSet<&str> {
    query.terms().collect()
}

/// BM25 score of one document. Repeated query terms count once.
pub fn score(index: &Bm25Index, query: &TokenSeq, doc_id: u64) -> Result<f64, RetrieveError> {
    let &idx = index.by_id.get(&doc_id).ok_or(RetrieveError::UnknownDoc(doc_id))?;
    let doc = &index.docs[idx];
    let mut total = 0.0;
    for term in query_terms(query) {
        if let Some(&tf) = doc.terms.get(term) {
            total += index.term_weight(idf(index, term), tf, doc.len);
        }
    }
    Ok(total)
}

/// Up to `k` best documents for `query_vi`, by score descending then doc id
/// ascending. Zero-score documents and `exclude` never appear.
pub fn top_k(index: &Bm25Index, query_vi: &str, k: usize, exclude: Option<u64>) -> Vec<RetrievedExample> {
    top_k_filtered(index, query_vi, k, |doc_id, _| Some(doc_id) != exclude)
}

/// [`top_k`] with an arbitrary keep predicate over `(doc_id, source_vi)`.
pub fn top_k_filtered(
    index: &Bm25Index,
    query_vi: &str,
    k: usize,
    keep: impl Fn(u64, &str) -> bool,
) -> Vec<RetrievedExample> {
    if k == 0 {
        return Vec::new();
    }
    let query = tokenize_vi(&normalize_text(query_vi));
    let mut scores: HashMap<usize, f64> = HashMap::new();
    for term in query_terms(&query) {
        let Some(postings) = index.postings.get(term) else {
            continue;
        };
        let term_idf = idf(index, term);
        for &(idx, tf) in postings {
            let weight = index.term_weight(term_idf, tf, index.docs[idx].len);
            *scores.entry(idx).or_insert(0.0) += weight;
        }
    }

    let mut ranked: Vec<(usize, f64)> = scores
        .into_iter()
        .filter(|&(idx, s)| s > 0.0 && keep(index.docs[idx].id, &index.docs[idx].source_vi))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.docs[a.0].id.cmp(&index.docs[b.0].id))
    });
    ranked.truncate(k);
    ranked.into_iter().map(|(idx, s)| index.example(idx, s)).collect()
}
