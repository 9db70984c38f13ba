//! Final corpus assembly: merge synthetic pairs, split, export.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{CorpusError, ParallelCorpus, Provenance, SentencePair};

pub const DEFAULT_INSTRUCTION: &str = "Translate the following Vietnamese sentence into Japanese.";

#[derive(Debug, thiserror::Error)]
pub enum AssembleError {
    #[error("pair {0}: synthetic input has baseline provenance")]
    NotSynthetic(u64),
    #[error("synthetic pair {id}: source {source_vi:?} matches no flagged pair")]
    UnmatchedSynthetic { id: u64, source_vi: String },
    #[error("invalid split ratios: {0}")]
    InvalidSplit(String),
    #[error("cannot split {groups} source group(s) three ways; need at least 3")]
    TooSmall { groups: usize },
    #[error("pair {0}: no Japanese target to export")]
    MissingTarget(u64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeOptions {
    /// Keep flagged baseline pairs next to their synthetic replacements.
    pub keep_flagged_baseline: bool,
}

/// A flagged pair dropped without any synthetic replacement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeWarning {
    pub id: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub corpus: ParallelCorpus,
    pub warnings: Vec<MergeWarning>,
}

/// Non-flagged pairs in their original order, then the synthetic pairs in
/// flagged order (t1 before t2 per source). Flagged baseline pairs are
/// dropped unless `keep_flagged_baseline` is set.
pub fn merge(
    corpus: &ParallelCorpus,
    synthetic: &[SentencePair],
    options: MergeOptions,
) -> Result<MergeOutcome, AssembleError> {
    let mut flagged_rank: HashMap<&str, usize> = HashMap::new();
    for (rank, pair) in corpus.flagged().enumerate() {
        flagged_rank.entry(pair.source_vi.as_str()).or_insert(rank);
    }

    let mut ordered: Vec<(usize, &SentencePair)> = Vec::with_capacity(synthetic.len());
    for pair in synthetic {
        if !pair.provenance.is_synthetic() {
            return Err(AssembleError::NotSynthetic(pair.id));
        }
        let rank = *flagged_rank
            .get(pair.source_vi.as_str())
            .ok_or_else(|| AssembleError::UnmatchedSynthetic {
                id: pair.id,
                source_vi: pair.source_vi.clone(),
            })?;
        ordered.push((rank, pair));
    }
    ordered.sort_by_key(|(rank, pair)| (*rank, pair.provenance));
    let replaced: std::collections::HashSet<&str> = ordered.iter().map(|(_, p)| p.source_vi.as_str()).collect();

    let mut warnings = Vec::new();
    let mut pairs: Vec<SentencePair> = Vec::with_capacity(corpus.len() + synthetic.len());
    for pair in corpus.iter() {
        if !pair.flagged || options.keep_flagged_baseline {
            pairs.push(pair.clone());
        } else if !replaced.contains(pair.source_vi.as_str()) {
            log::warn!("flagged pair {} dropped without a synthetic replacement", pair.id);
            warnings.push(MergeWarning {
                id: pair.id,
                message: "flagged baseline pair dropped; refinement produced no replacement".into(),
            });
        }
    }
    pairs.extend(ordered.into_iter().map(|(_, p)| p.clone()));

    let mut merged = ParallelCorpus::new(pairs)?;
    merged.metadata = corpus.metadata.clone();
    Ok(MergeOutcome {
        corpus: merged,
        warnings,
    })
}

/// Train/validation/test ratios plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.9,
            val: 0.05,
            test: 0.05,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self, AssembleError> {
        let spec = Self { train, val, test, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AssembleError> {
        let ratios = [self.train, self.val, self.test];
        if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(AssembleError::InvalidSplit(format!(
                "ratios must be non-negative: {ratios:?}"
            )));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AssembleError::InvalidSplit(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// SplitMix64 (Steele, Lea & Flood), used only to seed the shuffle.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `0..bound` by rejection (no modulo bias).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }
}

/// In-place Fisher–Yates: for i = n−1 down to 1, swap i with uniform j ≤ i.
pub fn shuffle<T>(items: &mut [T], rng: &mut SplitMix64) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: ParallelCorpus,
    pub val: ParallelCorpus,
    pub test: ParallelCorpus,
}

/// Seeded, source-grouped split. Pairs sharing a Vietnamese source always
/// land in the same part. Group counts are `floor(G · ratio)` for validation
/// and test; the remainder goes to train.
pub fn split(corpus: &ParallelCorpus, spec: &SplitSpec) -> Result<Split, AssembleError> {
    spec.validate()?;

    let mut group_of: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<&SentencePair>> = Vec::new();
    for pair in corpus.iter() {
        let next = groups.len();
        let g = *group_of.entry(pair.source_vi.as_str()).or_insert(next);
        if g == next {
            groups.push(Vec::new());
        }
        groups[g].push(pair);
    }

    let n = groups.len();
    if spec.train > 0.0 && spec.val > 0.0 && spec.test > 0.0 && n < 3 {
        return Err(AssembleError::TooSmall { groups: n });
    }

    shuffle(&mut groups, &mut SplitMix64::new(spec.seed));

    // the epsilon absorbs products like 0.29 * 100 = 28.999999999999996
    let share = |ratio: f64| ((n as f64 * ratio) + 1e-9).floor() as usize;
    let n_val = share(spec.val);
    let n_test = share(spec.test).min(n - n_val);
    let n_train = n - n_val - n_test;

    let collect = |range: std::ops::Range<usize>| -> Result<ParallelCorpus, AssembleError> {
        let pairs = groups[range].iter().flatten().map(|p| (*p).clone()).collect();
        let mut part = ParallelCorpus::new(pairs)?;
        part.metadata = corpus.metadata.clone();
        Ok(part)
    };
    Ok(Split {
        train: collect(0..n_train)?,
        val: collect(n_train..n_train + n_val)?,
        test: collect(n_train + n_val..n)?,
    })
}

/// Writes one chat-format record per pair:
/// `{"messages":[{"role":"user","content":"<instruction>\n<vi>"},{"role":"assistant","content":"<ja>"}]}`
pub fn write_training<W: Write>(corpus: &ParallelCorpus, mut out: W, instruction: &str) -> Result<(), AssembleError> {
    if let Some(pair) = corpus.iter().find(|p| p.target_ja.is_none()) {
        return Err(AssembleError::MissingTarget(pair.id));
    }
    let io = |source| AssembleError::Io {
        path: PathBuf::new(),
        source,
    };
    for pair in corpus.iter() {
        let record = json!({
            "messages": [
                {"role": "user", "content": format!("{instruction}\n{}", pair.source_vi)},
                {"role": "assistant", "content": pair.target_ja.as_deref().unwrap_or_default()},
            ]
        });
        serde_json::to_writer(&mut out, &record).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

pub fn export_training(corpus: &ParallelCorpus, path: &Path, instruction: &str) -> Result<(), AssembleError> {
    if let Some(pair) = corpus.iter().find(|p| p.target_ja.is_none()) {
        return Err(AssembleError::MissingTarget(pair.id));
    }
    let with_path = |source| AssembleError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(with_path)?;
    let mut writer = BufWriter::new(file);
    write_training(corpus, &mut writer, instruction).map_err(|e| match e {
        AssembleError::Io { source, .. } => with_path(source),
        other => other,
    })?;
    writer.flush().map_err(with_path)
}

/// Counts by provenance, for reports.
pub fn provenance_counts(corpus: &ParallelCorpus) -> [(Provenance, usize); 3] {
    let count = |p: Provenance| corpus.iter().filter(|x| x.provenance == p).count();
    [
        (Provenance::Baseline, count(Provenance::Baseline)),
        (Provenance::SyntheticT1, count(Provenance::SyntheticT1)),
        (Provenance::SyntheticT2, count(Provenance::SyntheticT2)),
    ]
}
