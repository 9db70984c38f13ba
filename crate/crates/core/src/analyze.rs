//! Bag-of-words frequency analysis and rare-word flagging.
//!
//! A sentence is *captured* by threshold `T` when it contains at least one
//! word or digit token whose corpus frequency is below `T`. The threshold is
//! chosen so that the captured share of sentences lands as close as possible
//! to a target fraction (0.15 by default).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_side, CorpusError, JaSegmentation, ParallelCorpus, SentencePair, Side, TokenSeq};

pub const DEFAULT_TARGET_FRACTION: f64 = 0.15;
pub const DEFAULT_BUCKET_WIDTH: u64 = 5;

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("pair {id}: {side} side is absent")]
    MissingSide { id: u64, side: Side },
    #[error("cannot select a threshold on an empty corpus")]
    EmptyCorpus,
    #[error("target fraction must lie strictly between 0 and 1, got {0}")]
    InvalidTargetFraction(f64),
    #[error("bucket width must be at least 1")]
    InvalidBucketWidth,
    #[error("captured fraction decreased between thresholds {lower} and {upper}")]
    NonMonotonic { lower: u64, upper: u64 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Corpus token frequencies for one side. Punctuation is not counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    total_tokens: u64,
    side: Side,
    segmentation: JaSegmentation,
}

impl FrequencyTable {
    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn segmentation(&self) -> JaSegmentation {
        self.segmentation
    }

    /// Occurrences of `token`; 0 when unseen.
    pub fn frequency(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    /// Tokens sorted by descending count, ties by token.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut entries: Vec<(&str, u64)> = self.counts.iter().map(|(t, c)| (t.as_str(), *c)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        entries
    }

    fn tokenize(&self, pair: &SentencePair) -> Result<TokenSeq, AnalyzeError> {
        side_tokens(pair, self.side, self.segmentation)
    }

    /// Smallest frequency among the sentence's terms; `None` without terms.
    fn min_frequency(&self, tokens: &TokenSeq) -> Option<u64> {
        tokens.terms().map(|t| self.frequency(t)).min()
    }
}

fn side_tokens(pair: &SentencePair, side: Side, segmentation: JaSegmentation) -> Result<TokenSeq, AnalyzeError> {
    let text = pair.side(side).ok_or(AnalyzeError::MissingSide { id: pair.id, side })?;
    Ok(tokenize_side(text, side, segmentation))
}

/// Counts every word/digit token occurrence on `side`.
pub fn build_frequency_table(
    corpus: &ParallelCorpus,
    side: Side,
    segmentation: JaSegmentation,
) -> Result<FrequencyTable, AnalyzeError> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total_tokens = 0u64;
    for pair in corpus.iter() {
        let tokens = side_tokens(pair, side, segmentation)?;
        for term in tokens.terms() {
            *counts.entry(term.to_owned()).or_default() += 1;
            total_tokens += 1;
        }
    }
    Ok(FrequencyTable {
        counts,
        total_tokens,
        side,
        segmentation,
    })
}

/// Audit record for the chosen flagging threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: u64,
    pub flagged_fraction: f64,
    pub target_fraction: f64,
    pub sentence_count: usize,
    pub flagged_count: usize,
    /// Every candidate threshold and the fraction of sentences it captures.
    pub candidate_fractions: BTreeMap<u64, f64>,
}

/// Picks the candidate threshold whose captured fraction is closest to
/// `target_fraction`, preferring the smaller threshold on ties.
///
/// Candidates are `0` plus `f + 1` for every distinct frequency `f` in the
/// table; the captured fraction only changes at those points.
pub fn select_threshold(
    table: &FrequencyTable,
    corpus: &ParallelCorpus,
    target_fraction: f64,
) -> Result<ThresholdReport, AnalyzeError> {
    if !(target_fraction > 0.0 && target_fraction < 1.0) {
        return Err(AnalyzeError::InvalidTargetFraction(target_fraction));
    }
    if corpus.is_empty() {
        return Err(AnalyzeError::EmptyCorpus);
    }

    let mut min_freqs: Vec<u64> = Vec::with_capacity(corpus.len());
    for pair in corpus.iter() {
        if let Some(f) = table.min_frequency(&table.tokenize(pair)?) {
            min_freqs.push(f);
        }
    }
    min_freqs.sort_unstable();

    let n = corpus.len();
    let captured_by = |threshold: u64| min_freqs.partition_point(|&f| f < threshold);

    let mut candidates: Vec<u64> = std::iter::once(0).chain(table.counts.values().map(|f| f + 1)).collect();
    candidates.sort_unstable();
    candidates.dedup();

    let mut candidate_fractions = BTreeMap::new();
    let mut best: Option<(u64, usize, f64)> = None;
    let mut previous: Option<(u64, usize)> = None;
    for &threshold in &candidates {
        let captured = captured_by(threshold);
        if let Some((lower, prev_captured)) = previous {
            if captured < prev_captured {
                return Err(AnalyzeError::NonMonotonic {
                    lower,
                    upper: threshold,
                });
            }
        }
        previous = Some((threshold, captured));

        let fraction = captured as f64 / n as f64;
        candidate_fractions.insert(threshold, fraction);
        let distance = (fraction - target_fraction).abs();
        // ascending order + strict comparison keeps the smaller T on ties
        if best.is_none_or(|(_, _, d)| distance < d) {
            best = Some((threshold, captured, distance));
        }
    }

    let (threshold, flagged_count, _) = best.expect("candidate set always contains 0");
    Ok(ThresholdReport {
        threshold,
        flagged_fraction: candidate_fractions[&threshold],
        target_fraction,
        sentence_count: n,
        flagged_count,
        candidate_fractions,
    })
}

/// Returns a copy with `flagged` set iff the pair contains a term whose
/// frequency is below `threshold`. Only `flagged` changes.
pub fn flag_sentences(
    corpus: &ParallelCorpus,
    table: &FrequencyTable,
    threshold: u64,
) -> Result<ParallelCorpus, AnalyzeError> {
    let mut flags = Vec::with_capacity(corpus.len());
    for pair in corpus.iter() {
        let tokens = table.tokenize(pair)?;
        flags.push(table.min_frequency(&tokens).is_some_and(|f| f < threshold));
    }
    let mut flags = flags.into_iter();
    Ok(corpus.map_pairs(|pair| pair.clone().with_flagged(flags.next().expect("one flag per pair")))?)
}

/// Sentence-length distribution: a sentence with `n` terms lands in bucket
/// `n / bucket_width`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bucket_width: u64,
    pub buckets: BTreeMap<u64, u64>,
    pub side: Side,
}

impl Histogram {
    pub fn sentence_count(&self) -> u64 {
        self.buckets.values().sum()
    }

    /// `bucket_start,count` with a header row. Empty buckets between 0 and the
    /// last occupied bucket are written as zero rows so the series plots
    /// directly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_start,count\n");
        if let Some(&last) = self.buckets.keys().next_back() {
            for bucket in 0..=last {
                let count = self.buckets.get(&bucket).copied().unwrap_or(0);
                out.push_str(&format!("{},{}\n", bucket * self.bucket_width, count));
            }
        }
        out
    }
}

/// Token-count histogram of one side. Counts word and digit tokens, matching
/// the frequency table.
pub fn token_count_histogram(
    corpus: &ParallelCorpus,
    side: Side,
    bucket_width: u64,
    segmentation: JaSegmentation,
) -> Result<Histogram, AnalyzeError> {
    if bucket_width == 0 {
        return Err(AnalyzeError::InvalidBucketWidth);
    }
    let mut buckets = BTreeMap::new();
    for pair in corpus.iter() {
        let n = side_tokens(pair, side, segmentation)?.term_count() as u64;
        *buckets.entry(n / bucket_width).or_default() += 1;
    }
    Ok(Histogram {
        bucket_width,
        buckets,
        side,
    })
}
