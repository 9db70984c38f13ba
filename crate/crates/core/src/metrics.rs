//! Corpus BLEU with a single reference per segment.
//!
//! BLEU = BP · exp(¼ Σ_{n=1..4} ln p_n), where p_n is the corpus-level
//! clipped n-gram precision and BP = min(1, exp(1 − r/c)). Any p_n = 0
//! gives 0 unless smoothing is requested. Scores depend on tokenization:
//! Japanese uses script-run tokens by default.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, tokenize_ja_with, tokenize_vi, JaSegmentation, Side, TokenSeq};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("hypothesis count {hypotheses} does not match reference count {references}")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("no segments to score")]
    Empty,
    #[error("n-gram order must be between 1 and {MAX_ORDER}, got {0}")]
    InvalidOrder(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Adds 1 to clipped and total counts for orders ≥ 2 whose clipped count is 0.
    AddOneClipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub bleu: f64,
    /// Effective precisions for orders 1–4 (after smoothing, if any).
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_length: usize,
    pub ref_length: usize,
    pub smoothed: bool,
    pub clipped: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
}

impl BleuReport {
    /// `BLEU = 28.30 (60.0/35.2/22.1/14.0, BP=1.000, hyp_len=100, ref_len=98)`
    pub fn summary(&self) -> String {
        let p: Vec<String> = self.precisions.iter().map(|p| format!("{:.1}", p * 100.0)).collect();
        format!(
            "BLEU = {:.2} ({}, BP={:.3}, hyp_len={}, ref_len={})",
            self.bleu * 100.0,
            p.join("/"),
            self.brevity_penalty,
            self.hyp_length,
            self.ref_length
        )
    }
}

fn check_order(n: usize) -> Result<(), MetricsError> {
    if (1..=MAX_ORDER).contains(&n) {
        Ok(())
    } else {
        Err(MetricsError::InvalidOrder(n))
    }
}

/// All contiguous n-grams with multiplicity.
pub fn ngram_counts(tokens: &TokenSeq, n: usize) -> Result<HashMap<Vec<&str>, usize>, MetricsError> {
    check_order(n)?;
    let texts: Vec<&str> = tokens.texts().collect();
    let mut counts = HashMap::new();
    for window in texts.windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Corpus sums of (clipped matches, hypothesis n-grams) for order `n`.
pub fn modified_precision(
    hypotheses: &[TokenSeq],
    references: &[TokenSeq],
    n: usize,
) -> Result<(usize, usize), MetricsError> {
    check_order(n)?;
    if hypotheses.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    let mut clipped = 0;
    let mut total = 0;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        let hyp_counts = ngram_counts(hyp, n)?;
        let ref_counts = ngram_counts(reference, n)?;
        for (gram, count) in &hyp_counts {
            clipped += (*count).min(ref_counts.get(gram).copied().unwrap_or(0));
            total += count;
        }
    }
    Ok((clipped, total))
}

/// 1 when the hypothesis is at least as long as the reference, otherwise
/// exp(1 − r/c); an empty hypothesis gets 0.
pub fn brevity_penalty(hyp_length: usize, ref_length: usize) -> f64 {
    if hyp_length >= ref_length {
        1.0
    } else if hyp_length == 0 {
        0.0
    } else {
        (1.0 - ref_length as f64 / hyp_length as f64).exp()
    }
}

/// How raw strings become BLEU tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuTokenization {
    pub language: Side,
    pub ja_segmentation: JaSegmentation,
}

impl BleuTokenization {
    pub fn vi() -> Self {
        Self {
            language: Side::Vi,
            ja_segmentation: JaSegmentation::ScriptRun,
        }
    }

    pub fn ja(segmentation: JaSegmentation) -> Self {
        Self {
            language: Side::Ja,
            ja_segmentation: segmentation,
        }
    }

    /// Normalizes, then tokenizes; punctuation tokens are kept.
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        let text = normalize_text(text);
        match self.language {
            Side::Vi => tokenize_vi(&text),
            Side::Ja => tokenize_ja_with(&text, self.ja_segmentation),
        }
    }
}

pub fn corpus_bleu(
    hypotheses: &[impl AsRef<str>],
    references: &[impl AsRef<str>],
    tokenization: BleuTokenization,
    smoothing: Smoothing,
) -> Result<BleuReport, MetricsError> {
    if hypotheses.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hyps: Vec<TokenSeq> = hypotheses.iter().map(|h| tokenization.tokenize(h.as_ref())).collect();
    let refs: Vec<TokenSeq> = references.iter().map(|r| tokenization.tokenize(r.as_ref())).collect();
    bleu_from_tokens(&hyps, &refs, smoothing)
}

/// BLEU over pre-tokenized segments.
pub fn bleu_from_tokens(
    hypotheses: &[TokenSeq],
    references: &[TokenSeq],
    smoothing: Smoothing,
) -> Result<BleuReport, MetricsError> {
    if hypotheses.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut clipped = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let mut precisions = [0.0f64; MAX_ORDER];
    let mut smoothed = false;
    for n in 1..=MAX_ORDER {
        let (c, t) = modified_precision(hypotheses, references, n)?;
        clipped[n - 1] = c;
        totals[n - 1] = t;
        let (mut c, mut t) = (c as f64, t as f64);
        if smoothing == Smoothing::AddOneClipped && n >= 2 && clipped[n - 1] == 0 {
            c += 1.0;
            t += 1.0;
            smoothed = true;
        }
        precisions[n - 1] = if t > 0.0 { c / t } else { 0.0 };
    }

    let hyp_length = hypotheses.iter().map(TokenSeq::len).sum();
    let ref_length = references.iter().map(TokenSeq::len).sum();
    let bp = brevity_penalty(hyp_length, ref_length);
    Ok(BleuReport {
        bleu: combine(&precisions, bp),
        precisions,
        brevity_penalty: bp,
        hyp_length,
        ref_length,
        smoothed,
        clipped,
        totals,
    })
}

/// BP · geometric mean of the precisions; 0 if any precision is 0.
pub fn combine(precisions: &[f64; MAX_ORDER], brevity_penalty: f64) -> f64 {
    if precisions.iter().any(|&p| p <= 0.0) {
        return 0.0;
    }
    let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
    brevity_penalty * mean_log.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_words(s)
    }

    #[test]
    fn unigram_and_bigram_counts() {
        let t = seq("a b a");
        let uni = ngram_counts(&t, 1).unwrap();
        assert_eq!(uni[&vec!["a"]], 2);
        assert_eq!(uni[&vec!["b"]], 1);
        let bi = ngram_counts(&t, 2).unwrap();
        assert_eq!(bi.len(), 2);
        assert_eq!(bi[&vec!["a", "b"]], 1);
        assert_eq!(bi[&vec!["b", "a"]], 1);
        assert!(ngram_counts(&t, 4).unwrap().is_empty());
        assert_eq!(ngram_counts(&t, 5), Err(MetricsError::InvalidOrder(5)));
    }

    #[test]
    fn classic_clipping() {
        let (c, t) = modified_precision(
            &[seq("the the the the the the the")],
            &[seq("the cat is on the mat")],
            1,
        )
        .unwrap();
        assert_eq!((c, t), (2, 7));
    }

    #[test]
    fn identical_segments_full_precision() {
        let s = seq("một hai ba bốn năm");
        for n in 1..=4 {
            let one = std::slice::from_ref(&s);
            assert_eq!(modified_precision(one, one, n).unwrap(), (6 - n, 6 - n));
        }
    }

    #[test]
    fn disjoint_vocab() {
        assert_eq!(modified_precision(&[seq("a b")], &[seq("c d")], 1).unwrap(), (0, 2));
    }

    #[test]
    fn mismatch_is_error() {
        assert!(matches!(
            modified_precision(&[seq("a")], &[], 1),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            corpus_bleu(&["a"], &["a", "b"], BleuTokenization::vi(), Smoothing::None),
            Err(MetricsError::LengthMismatch {
                hypotheses: 1,
                references: 2
            })
        );
        let none: [&str; 0] = [];
        assert_eq!(
            corpus_bleu(&none, &none, BleuTokenization::vi(), Smoothing::None),
            Err(MetricsError::Empty)
        );
    }

    #[test]
    fn brevity_cases() {
        assert_eq!(brevity_penalty(10, 10), 1.0);
        assert_eq!(brevity_penalty(12, 10), 1.0);
        assert_eq!(brevity_penalty(5, 10), (-1.0f64).exp());
        assert!((brevity_penalty(5, 10) - 0.36788).abs() < 1e-5);
        assert_eq!(brevity_penalty(0, 10), 0.0);
    }

    #[test]
    fn identical_corpus_scores_one() {
        let refs = ["tôi là sinh viên .", "hôm nay trời đẹp quá !"];
        let r = corpus_bleu(&refs, &refs, BleuTokenization::vi(), Smoothing::None).unwrap();
        assert_eq!(r.bleu, 1.0);
        assert_eq!(r.brevity_penalty, 1.0);
        assert_eq!(r.precisions, [1.0; 4]);
    }

    #[test]
    fn japanese_tokenization_used() {
        let r = corpus_bleu(
            &["私は学生です。毎日学校に行きます。"],
            &["私は学生です。毎日学校に行きます。"],
            BleuTokenization::ja(JaSegmentation::ScriptRun),
            Smoothing::None,
        )
        .unwrap();
        assert_eq!(r.bleu, 1.0);
        // 私 は 学生 です 。 毎日学校 に 行 きます 。
        assert_eq!(r.hyp_length, 10);
    }

    #[test]
    fn no_four_gram_overlap_is_zero() {
        let r = corpus_bleu(
            &["a b c x d e f"],
            &["a b c y d e f"],
            BleuTokenization::vi(),
            Smoothing::None,
        )
        .unwrap();
        assert_eq!(r.clipped[3], 0);
        assert_eq!(r.bleu, 0.0);
        assert!(!r.smoothed);
    }

    #[test]
    fn add_one_smoothing() {
        let r = corpus_bleu(
            &["a b c x d e f"],
            &["a b c y d e f"],
            BleuTokenization::vi(),
            Smoothing::AddOneClipped,
        )
        .unwrap();
        assert!(r.smoothed);
        // 4-grams: 4 in hyp, none match -> (0+1)/(4+1)
        assert_eq!(r.precisions[3], 1.0 / 5.0);
        // unigrams never smoothed: 6/7
        assert_eq!(r.precisions[0], 6.0 / 7.0);
        assert!(r.bleu > 0.0);
        assert!((combine(&r.precisions, r.brevity_penalty) - r.bleu).abs() < 1e-12);
    }

    #[test]
    fn summary_format() {
        let r = BleuReport {
            bleu: 0.283,
            precisions: [0.6, 0.352, 0.221, 0.14],
            brevity_penalty: 1.0,
            hyp_length: 100,
            ref_length: 98,
            smoothed: false,
            clipped: [0; 4],
            totals: [0; 4],
        };
        assert_eq!(
            r.summary(),
            "BLEU = 28.30 (60.0/35.2/22.1/14.0, BP=1.000, hyp_len=100, ref_len=98)"
        );
    }
}
