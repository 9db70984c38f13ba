//! Reference oracles for the test suites.
//!
//! Everything here is written the slow, obvious way over plain token vectors
//! and shares no code with `vnjp-core`'s scoring paths.

pub mod gen;

/// Counts occurrences of `gram` in `tokens` by scanning every window.
fn occurrences(tokens: &[String], gram: &[String]) -> usize {
    if gram.len() > tokens.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| tokens[i..i + gram.len()] == *gram)
        .count()
}

/// Corpus BLEU computed directly from the definition.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleBleu {
    pub bleu: f64,
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub clipped: [usize; 4],
    pub totals: [usize; 4],
    pub hyp_length: usize,
    pub ref_length: usize,
}

pub fn brute_force_bleu(hyps: &[Vec<String>], refs: &[Vec<String>], add_one_smoothing: bool) -> OracleBleu {
    assert_eq!(hyps.len(), refs.len());
    let mut clipped = [0usize; 4];
    let mut totals = [0usize; 4];
    for (hyp, reference) in hyps.iter().zip(refs) {
        for n in 1..=4usize {
            if hyp.len() < n {
                continue;
            }
            totals[n - 1] += hyp.len() - n + 1;
            // visit each distinct hyp n-gram once (first occurrence)
            for i in 0..=hyp.len() - n {
                let gram = &hyp[i..i + n];
                let seen_before = (0..i).any(|j| hyp[j..j + n] == *gram);
                if seen_before {
                    continue;
                }
                let in_hyp = occurrences(hyp, gram);
                let in_ref = occurrences(reference, gram);
                clipped[n - 1] += in_hyp.min(in_ref);
            }
        }
    }

    let mut precisions = [0.0f64; 4];
    for n in 0..4 {
        let (mut c, mut t) = (clipped[n] as f64, totals[n] as f64);
        if add_one_smoothing && n >= 1 && clipped[n] == 0 {
            c += 1.0;
            t += 1.0;
        }
        precisions[n] = if t == 0.0 { 0.0 } else { c / t };
    }

    let hyp_length: usize = hyps.iter().map(Vec::len).sum();
    let ref_length: usize = refs.iter().map(Vec::len).sum();
    let brevity_penalty = if hyp_length >= ref_length {
        1.0
    } else if hyp_length == 0 {
        0.0
    } else {
        (1.0 - ref_length as f64 / hyp_length as f64).exp()
    };

    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_sum: f64 = precisions.iter().map(|p| p.ln()).sum();
        brevity_penalty * (log_sum / 4.0).exp()
    };

    OracleBleu {
        bleu,
        precisions,
        brevity_penalty,
        clipped,
        totals,
        hyp_length,
        ref_length,
    }
}

/// BM25 score of `docs[doc]` for `query`, recomputing every corpus statistic
/// from scratch. Repeated query terms count once.
pub fn brute_force_bm25(docs: &[Vec<String>], query: &[String], doc: usize, k1: f64, b: f64) -> f64 {
    let n_docs = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n_docs;
    let target = &docs[doc];
    let dl = target.len() as f64;

    let mut distinct: Vec<&String> = Vec::new();
    for term in query {
        if !distinct.contains(&term) {
            distinct.push(term);
        }
    }

    let mut score = 0.0;
    for term in distinct {
        let tf = target.iter().filter(|t| *t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
        let idf = ((n_docs - df + 0.5) / (df + 0.5) + 1.0).ln();
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    score
}

/// Scores closer than this are ties: the oracle sums query terms in a
/// different order from the index, so equal scores can differ in the last ulp.
pub const TIE_EPS: f64 = 1e-12;

/// Exhaustive ranking: every document scored, zero scores dropped, sorted by
/// score descending then id ascending (within [`TIE_EPS`]), truncated to `k`.
pub fn brute_force_top_k(
    docs: &[Vec<String>],
    ids: &[u64],
    query: &[String],
    k: usize,
    exclude: Option<u64>,
    k1: f64,
    b: f64,
) -> Vec<(u64, f64)> {
    let mut scored: Vec<(u64, f64)> = (0..docs.len())
        .filter(|&i| Some(ids[i]) != exclude)
        .map(|i| (ids[i], brute_force_bm25(docs, query, i, k1, b)))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    // selection-style ordering, written independently of sort_by
    let mut out = Vec::new();
    while out.len() < k && !scored.is_empty() {
        let mut best = 0;
        for i in 1..scored.len() {
            let (id, s) = scored[i];
            let (bid, bs) = scored[best];
            if s > bs + TIE_EPS || ((s - bs).abs() <= TIE_EPS && id < bid) {
                best = i;
            }
        }
        out.push(scored.remove(best));
    }
    out
}

/// Result of sweeping every integer threshold.
#[derive(Debug, Clone)]
pub struct Sweep {
    /// fraction captured for T = 0, 1, ..., max_frequency + 1
    pub fractions: Vec<f64>,
    /// smallest T whose fraction is closest to the target
    pub best_threshold: u64,
    pub best_fraction: f64,
}

/// Tries every integer T in `[0, max_frequency + 1]`, recounting token
/// frequencies from the raw sentences.
pub fn threshold_sweep(sentences: &[Vec<String>], target: f64) -> Sweep {
    let mut vocab: Vec<(String, u64)> = Vec::new();
    for sentence in sentences {
        for token in sentence {
            match vocab.iter_mut().find(|(t, _)| t == token) {
                Some((_, c)) => *c += 1,
                None => vocab.push((token.clone(), 1)),
            }
        }
    }
    let freq = |token: &String| vocab.iter().find(|(t, _)| t == token).map(|(_, c)| *c).unwrap();
    let max_freq = vocab.iter().map(|(_, c)| *c).max().unwrap_or(0);

    let n = sentences.len() as f64;
    let mut fractions = Vec::new();
    let mut best_threshold = 0;
    let mut best_distance = f64::INFINITY;
    for threshold in 0..=max_freq + 1 {
        let captured = sentences
            .iter()
            .filter(|s| s.iter().any(|t| freq(t) < threshold))
            .count();
        let fraction = captured as f64 / n;
        let distance = (fraction - target).abs();
        if distance < best_distance {
            best_distance = distance;
            best_threshold = threshold;
        }
        fractions.push(fraction);
    }
    Sweep {
        best_fraction: fractions[best_threshold as usize],
        fractions,
        best_threshold,
    }
}

/// Faster sweep for large corpora: same definition, with frequencies in a
/// hash map and per-sentence minimum frequency.
pub fn threshold_sweep_large(sentences: &[Vec<String>], target: f64) -> Sweep {
    let mut freq: std::collections::HashMap<&str, u64> = std::collections::HashMap::new();
    for sentence in sentences {
        for token in sentence {
            *freq.entry(token.as_str()).or_default() += 1;
        }
    }
    let max_freq = freq.values().copied().max().unwrap_or(0);
    let mins: Vec<Option<u64>> = sentences
        .iter()
        .map(|s| s.iter().map(|t| freq[t.as_str()]).min())
        .collect();

    let n = sentences.len() as f64;
    let mut fractions = Vec::new();
    let mut best_threshold = 0;
    let mut best_distance = f64::INFINITY;
    for threshold in 0..=max_freq + 1 {
        let captured = mins.iter().filter(|m| m.is_some_and(|m| m < threshold)).count();
        let fraction = captured as f64 / n;
        let distance = (fraction - target).abs();
        if distance < best_distance {
            best_distance = distance;
            best_threshold = threshold;
        }
        fractions.push(fraction);
    }
    Sweep {
        best_fraction: fractions[best_threshold as usize],
        fractions,
        best_threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_oracle_classic_clipping() {
        let o = brute_force_bleu(
            &[words("the the the the the the the")],
            &[words("the cat is on the mat")],
            false,
        );
        assert_eq!((o.clipped[0], o.totals[0]), (2, 7));
    }

    #[test]
    fn sweeps_agree() {
        let s = vec![words("a b"), words("a c"), words("a b d"), words("e")];
        let slow = threshold_sweep(&s, 0.15);
        let fast = threshold_sweep_large(&s, 0.15);
        assert_eq!(slow.fractions, fast.fractions);
        assert_eq!(slow.best_threshold, fast.best_threshold);
    }
}
