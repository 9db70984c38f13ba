//! Parallel corpus types, text normalization, tokenization and file formats.

mod io;
mod normalize;
mod tokenize;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use io::{load_corpus, read_corpus, save_corpus, write_corpus, CorpusFormat};
pub use normalize::{normalize_bytes, normalize_text};
pub use tokenize::{
    script_class, tokenize_ja, tokenize_ja_with, tokenize_side, tokenize_vi, JaSegmentation, ScriptClass, Side, Token,
    TokenKind, TokenSeq,
};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid UTF-8{} at byte offset {offset}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Decode { line: Option<usize>, offset: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate pair id {0}")]
    DuplicateId(u64),
    #[error("pair {0}: Vietnamese source is empty after normalization")]
    EmptySource(u64),
    #[error("pair {0}: synthetic provenance requires a Japanese target")]
    MissingSyntheticTarget(u64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where a pair's Japanese side came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Baseline,
    SyntheticT1,
    SyntheticT2,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Baseline => "baseline",
            Provenance::SyntheticT1 => "synthetic_t1",
            Provenance::SyntheticT2 => "synthetic_t2",
        }
    }

    pub fn is_synthetic(self) -> bool {
        !matches!(self, Provenance::Baseline)
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Provenance::Baseline),
            "synthetic_t1" => Ok(Provenance::SyntheticT1),
            "synthetic_t2" => Ok(Provenance::SyntheticT2),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

/// One aligned Vietnamese/Japanese sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub id: u64,
    pub source_vi: String,
    pub target_ja: Option<String>,
    pub provenance: Provenance,
    pub flagged: bool,
}

impl SentencePair {
    /// Normalizes both sides; an empty Japanese side becomes `None`.
    pub fn new(id: u64, source_vi: &str, target_ja: Option<&str>) -> Self {
        Self {
            id,
            source_vi: normalize_text(source_vi),
            target_ja: target_ja.map(normalize_text).filter(|t| !t.is_empty()),
            provenance: Provenance::Baseline,
            flagged: false,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn with_flagged(mut self, flagged: bool) -> Self {
        self.flagged = flagged;
        self
    }

    /// The text of one side, if present.
    pub fn side(&self, side: Side) -> Option<&str> {
        match side {
            Side::Vi => Some(self.source_vi.as_str()),
            Side::Ja => self.target_ja.as_deref(),
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.source_vi.is_empty() {
            return Err(CorpusError::EmptySource(self.id));
        }
        if self.provenance.is_synthetic() && self.target_ja.is_none() {
            return Err(CorpusError::MissingSyntheticTarget(self.id));
        }
        Ok(())
    }
}

/// An ordered, id-unique collection of sentence pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<SentencePair>,
    /// Free-form annotations (source file, stage, tool version). Not persisted
    /// by the corpus file formats.
    pub metadata: BTreeMap<String, String>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<SentencePair>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for pair in &pairs {
            pair.validate()?;
            if !seen.insert(pair.id) {
                return Err(CorpusError::DuplicateId(pair.id));
            }
        }
        Ok(Self {
            pairs,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn into_pairs(self) -> Vec<SentencePair> {
        self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SentencePair> {
        self.pairs.iter()
    }

    pub fn get(&self, id: u64) -> Option<&SentencePair> {
        self.pairs.iter().find(|p| p.id == id)
    }

    pub fn max_id(&self) -> Option<u64> {
        self.pairs.iter().map(|p| p.id).max()
    }

    pub fn flagged(&self) -> impl Iterator<Item = &SentencePair> {
        self.pairs.iter().filter(|p| p.flagged)
    }

    /// Applies `f` to every pair; used by stages that only touch mutable
    /// annotations such as `flagged`.
    pub fn map_pairs(&self, f: impl FnMut(&SentencePair) -> SentencePair) -> Result<Self, CorpusError> {
        let mut out = Self::new(self.pairs.iter().map(f).collect())?;
        out.metadata = self.metadata.clone();
        Ok(out)
    }
}
