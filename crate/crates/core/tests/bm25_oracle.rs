use proptest::prelude::*;
use rand::Rng;
use vnjp_core::corpus::{tokenize_vi, ParallelCorpus, SentencePair};
use vnjp_core::retrieve::{build_index, score, top_k, Bm25Index, DEFAULT_B, DEFAULT_K1};
use vnjp_testkit::gen::{rng, small_tokens};
use vnjp_testkit::{brute_force_bm25, brute_force_top_k};

fn random_pool(seed: u64, max_docs: usize) -> (Vec<Vec<String>>, Vec<u64>, Bm25Index) {
    let mut r = rng(seed);
    let n = r.gen_range(1..=max_docs);
    let mut docs = Vec::new();
    let mut ids = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..n {
        let mut toks = small_tokens(&mut r, 12, 15);
        if toks.is_empty() {
            toks.push("wa".into());
        }
        let id = 3 * i as u64 + 10;
        pairs.push(SentencePair::new(id, &toks.join(" "), Some("訳")));
        docs.push(toks);
        ids.push(id);
    }
    let index = build_index(&ParallelCorpus::new(pairs).unwrap(), DEFAULT_K1, DEFAULT_B).unwrap();
    (docs, ids, index)
}

#[test]
fn scores_and_rankings_match_brute_force() {
    for seed in 0..100u64 {
        let (docs, ids, index) = random_pool(seed, 200);
        let mut r = rng(seed ^ 0xABCD);
        for _ in 0..5 {
            let query = small_tokens(&mut r, 14, 6);
            let q = tokenize_vi(&query.join(" "));
            for (i, &id) in ids.iter().enumerate() {
                let got = score(&index, &q, id).unwrap();
                let want = brute_force_bm25(&docs, &query, i, DEFAULT_K1, DEFAULT_B);
                assert!((got - want).abs() <= 1e-12, "doc {id}: {got} vs {want}");
            }
            let exclude = if r.gen_bool(0.5) {
                Some(ids[r.gen_range(0..ids.len())])
            } else {
                None
            };
            let got: Vec<(u64, f64)> = top_k(&index, &query.join(" "), 3, exclude)
                .into_iter()
                .map(|e| (e.doc_id, e.score))
                .collect();
            let want = brute_force_top_k(&docs, &ids, &query, 3, exclude, DEFAULT_K1, DEFAULT_B);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert!((g.1 - w.1).abs() <= 1e-12);
            }
            let got_ids: Vec<u64> = got.iter().map(|g| g.0).collect();
            let want_ids: Vec<u64> = want.iter().map(|w| w.0).collect();
            assert_eq!(got_ids, want_ids);
        }
    }
}

#[test]
fn top_k_scores_equal_point_scores() {
    let (_, _, index) = random_pool(99, 150);
    let query = "wa wb wc wd wa";
    let q = tokenize_vi(query);
    for hit in top_k(&index, query, 10, None) {
        assert_eq!(hit.score, score(&index, &q, hit.doc_id).unwrap());
    }
}

proptest! {
    #[test]
    fn scores_nonnegative_and_sorted(seed in any::<u64>(), k in 0usize..8) {
        let (_, _, index) = random_pool(seed, 40);
        let mut r = rng(seed);
        let query = small_tokens(&mut r, 12, 6).join(" ");
        let hits = top_k(&index, &query, k, None);
        prop_assert!(hits.len() <= k);
        for w in hits.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].doc_id < w[1].doc_id));
        }
        for h in &hits {
            prop_assert!(h.score > 0.0);
        }
    }

    #[test]
    fn exclusion_removes_only_that_doc(seed in any::<u64>()) {
        let (_, ids, index) = random_pool(seed, 30);
        let mut r = rng(seed);
        let query = small_tokens(&mut r, 12, 6).join(" ");
        let victim = ids[r.gen_range(0..ids.len())];
        let all = top_k(&index, &query, usize::MAX, None);
        let without = top_k(&index, &query, usize::MAX, Some(victim));
        let expected: Vec<u64> = all.iter().map(|h| h.doc_id).filter(|&d| d != victim).collect();
        prop_assert_eq!(without.iter().map(|h| h.doc_id).collect::<Vec<_>>(), expected);
    }
}
