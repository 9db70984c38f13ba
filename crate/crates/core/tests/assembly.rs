use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::Rng;
use vnjp_core::assemble::{merge, split, write_training, MergeOptions, SplitSpec};
use vnjp_core::corpus::{ParallelCorpus, Provenance, SentencePair};
use vnjp_testkit::gen::{rng, vi_word};

/// Corpus with some repeated sources, flagged at random.
fn random_corpus(seed: u64, max: usize) -> ParallelCorpus {
    let mut r = rng(seed);
    let n = r.gen_range(3..=max);
    let distinct = r.gen_range(3..=n);
    ParallelCorpus::new(
        (0..n)
            .map(|i| {
                let src = format!("{} {}", vi_word(i % distinct), vi_word(i % distinct + 1000));
                SentencePair::new(i as u64, &src, Some(&format!("文{i}"))).with_flagged(r.gen_bool(0.3))
            })
            .collect(),
    )
    .unwrap()
}

/// Synthetic t1/t2 pairs for a random subset of distinct flagged sources.
fn synthetic_for(corpus: &ParallelCorpus, seed: u64) -> (Vec<SentencePair>, usize) {
    let mut r = rng(seed);
    let base = corpus.max_id().unwrap();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut refined = 0;
    for (i, p) in corpus.flagged().enumerate() {
        if !seen.insert(p.source_vi.clone()) || !r.gen_bool(0.8) {
            continue;
        }
        refined += 1;
        let id = base + 2 * i as u64 + 1;
        out.push(SentencePair::new(id, &p.source_vi, Some("t1")).with_provenance(Provenance::SyntheticT1));
        out.push(SentencePair::new(id + 1, &p.source_vi, Some("t2")).with_provenance(Provenance::SyntheticT2));
    }
    (out, refined)
}

#[test]
fn merge_law_random_cases() {
    for seed in 0..1000u64 {
        let corpus = random_corpus(seed, 40);
        let (synthetic, refined) = synthetic_for(&corpus, seed);
        let nonflagged = corpus.iter().filter(|p| !p.flagged).count();
        let out = merge(&corpus, &synthetic, MergeOptions::default()).unwrap();
        assert_eq!(out.corpus.len(), nonflagged + 2 * refined, "seed {seed}");
        assert!(out
            .corpus
            .iter()
            .all(|p| !(p.flagged && p.provenance == Provenance::Baseline)));
        // non-flagged first in original order, then synthetics
        let head: Vec<u64> = out.corpus.iter().take(nonflagged).map(|p| p.id).collect();
        let want: Vec<u64> = corpus.iter().filter(|p| !p.flagged).map(|p| p.id).collect();
        assert_eq!(head, want);
    }
}

#[test]
fn keep_flagged_baseline_keeps_everything() {
    let corpus = random_corpus(5, 30);
    let (synthetic, _) = synthetic_for(&corpus, 5);
    let out = merge(
        &corpus,
        &synthetic,
        MergeOptions {
            keep_flagged_baseline: true,
        },
    )
    .unwrap();
    assert_eq!(out.corpus.len(), corpus.len() + synthetic.len());
    assert!(out.warnings.is_empty());
}

fn ids(c: &ParallelCorpus) -> Vec<u64> {
    c.iter().map(|p| p.id).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn split_partition_law(seed in any::<u64>(), split_seed in any::<u64>(), val in 0.0f64..0.3, test in 0.0f64..0.3) {
        let corpus = random_corpus(seed, 60);
        let spec = SplitSpec::new(1.0 - val - test, val, test, split_seed).unwrap();
        let s = split(&corpus, &spec).unwrap();

        let mut all: Vec<u64> = [ids(&s.train), ids(&s.val), ids(&s.test)].concat();
        prop_assert_eq!(all.len(), corpus.len());
        all.sort_unstable();
        prop_assert_eq!(all, ids(&corpus));

        let mut part_of: HashMap<&str, usize> = HashMap::new();
        for (k, part) in [&s.train, &s.val, &s.test].into_iter().enumerate() {
            for p in part.iter() {
                prop_assert_eq!(*part_of.entry(p.source_vi.as_str()).or_insert(k), k);
            }
        }

        let again = split(&corpus, &spec).unwrap();
        prop_assert_eq!(&again, &s);
    }
}

#[test]
fn export_lines_are_json() {
    let corpus = random_corpus(3, 20);
    let mut buf = Vec::new();
    write_training(&corpus, &mut buf, "Dịch sang tiếng Nhật.").unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), corpus.len());
    for (line, pair) in text.lines().zip(corpus.iter()) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["messages"][1]["content"], pair.target_ja.as_deref().unwrap());
    }
}
