//! Seeded generators for synthetic corpora.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Zipf};

const HAN: &[char] = &[
    '日', '本', '語', '学', '生', '先', '私', '猫', '犬', '山', '川', '海', '空', '雨', '花', '木', '人', '車', '道',
    '駅', '店', '国', '家', '水', '火', '金', '土', '月', '年', '時', '書', '食',
];
const KANA: &[char] = &[
    'あ', 'い', 'う', 'え', 'お', 'か', 'き', 'く', 'け', 'こ', 'さ', 'し', 'す', 'せ', 'そ', 'た',
];
const VI_ONSETS: &[&str] = &[
    "b", "c", "d", "đ", "g", "h", "k", "l", "m", "n", "ph", "t", "th", "tr", "v", "x",
];
const VI_RIMES: &[&str] = &[
    "a", "à", "ạ", "ăn", "âm", "e", "ê", "i", "o", "ô", "ơi", "u", "ư", "ương", "iêt", "uyên",
];

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Japanese-looking word for vocabulary index `i`: a Han stem plus an
/// optional kana tail, unique per index.
pub fn ja_word(i: usize) -> String {
    let mut s = String::new();
    let mut v = i;
    loop {
        s.push(HAN[v % HAN.len()]);
        v /= HAN.len();
        if v == 0 {
            break;
        }
    }
    s
}

/// Vietnamese-looking syllable for vocabulary index `i` (unique per index).
pub fn vi_word(i: usize) -> String {
    let base = VI_ONSETS.len() * VI_RIMES.len();
    let mut s = String::new();
    let mut v = i;
    loop {
        let syl = v % base;
        s.push_str(VI_ONSETS[syl / VI_RIMES.len()]);
        s.push_str(VI_RIMES[syl % VI_RIMES.len()]);
        v /= base;
        if v == 0 {
            break;
        }
    }
    s
}

/// A pair of plain strings; callers wrap them into corpus types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPair {
    pub vi: String,
    pub ja: String,
}

/// Sentences whose Japanese words follow a Zipf law over `vocab` words.
/// Japanese words are space separated so each is one script-run token.
pub fn zipf_corpus(seed: u64, sentences: usize, vocab: usize, exponent: f64) -> Vec<RawPair> {
    let mut rng = rng(seed);
    let zipf = Zipf::new(vocab as u64, exponent).expect("valid zipf parameters");
    (0..sentences)
        .map(|_| {
            let len = rng.gen_range(3..=14);
            let ja_ids: Vec<usize> = (0..len).map(|_| zipf.sample(&mut rng) as usize - 1).collect();
            let ja: Vec<String> = ja_ids.iter().map(|&i| ja_word(i)).collect();
            let vi: Vec<String> = ja_ids.iter().map(|&i| vi_word(i)).collect();
            RawPair {
                vi: vi.join(" "),
                ja: ja.join(" ") + "。",
            }
        })
        .collect()
}

/// Random token sequence over a small vocabulary of short Latin words.
pub fn small_tokens<R: Rng>(rng: &mut R, vocab: usize, max_len: usize) -> Vec<String> {
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| format!("w{}", (b'a' + rng.gen_range(0..vocab as u8)) as char))
        .collect()
}

/// Random Vietnamese-looking sentence of 1..=max_len syllables from a
/// vocabulary of `vocab` syllables.
pub fn vi_sentence<R: Rng>(rng: &mut R, vocab: usize, max_len: usize) -> String {
    let len = rng.gen_range(1..=max_len);
    (0..len)
        .map(|_| vi_word(rng.gen_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random Japanese-looking sentence mixing Han words and kana particles.
pub fn ja_sentence<R: Rng>(rng: &mut R, vocab: usize, max_len: usize) -> String {
    let len = rng.gen_range(1..=max_len);
    let mut out = String::new();
    for i in 0..len {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&ja_word(rng.gen_range(0..vocab)));
        if rng.gen_bool(0.4) {
            out.push(KANA[rng.gen_range(0..KANA.len())]);
        }
    }
    out.push('。');
    out
}

/// `id<TAB>vi<TAB>ja` lines for `pairs`, ids counting from 1.
pub fn to_tsv(pairs: &[RawPair]) -> String {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{}\t{}\t{}\n", i + 1, p.vi, p.ja))
        .collect()
}
