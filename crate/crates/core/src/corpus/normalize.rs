use unicode_normalization::UnicodeNormalization;

use super::CorpusError;

/// NFKC + full case folding, trimmed, with internal whitespace runs collapsed
/// to a single ASCII space.
pub fn normalize_text(raw: &str) -> String {
    let compat: String = raw.nfkc().collect();
    let folded = caseless::default_case_fold_str(&compat);
    // folding can decompose (e.g. U+0130), so recompose before collapsing
    let recomposed: String = folded.nfkc().collect();
    collapse_whitespace(&recomposed)
}

/// Decodes `raw` as UTF-8 and normalizes it. Invalid input reports the byte
/// offset of the first bad sequence.
pub fn normalize_bytes(raw: &[u8]) -> Result<String, CorpusError> {
    match std::str::from_utf8(raw) {
        Ok(text) => Ok(normalize_text(text)),
        Err(err) => Err(CorpusError::Decode {
            line: None,
            offset: err.valid_up_to(),
        }),
    }
}

fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}
