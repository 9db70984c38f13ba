//! Deterministic, dictionary-free tokenizers for normalized text.
//!
//! Vietnamese is split on letter/digit/punctuation classes. Japanese is split
//! into maximal runs of one script class (Han, Hiragana, Katakana, Latin,
//! digits); every punctuation character is its own token. Both assume input
//! already passed through [`normalize_text`](super::normalize_text).

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_script::{Script, UnicodeScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Punct,
    Digit,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

impl Token {
    pub fn new(text: impl Into<String>, kind: TokenKind) -> Self {
        Self {
            text: text.into(),
            kind,
        }
    }

    pub fn word(text: impl Into<String>) -> Self {
        Self::new(text, TokenKind::Word)
    }

    pub fn punct(text: impl Into<String>) -> Self {
        Self::new(text, TokenKind::Punct)
    }

    pub fn digit(text: impl Into<String>) -> Self {
        Self::new(text, TokenKind::Digit)
    }

    /// Word and digit tokens carry lexical content; punctuation does not.
    pub fn is_term(&self) -> bool {
        matches!(self.kind, TokenKind::Word | TokenKind::Digit)
    }
}

/// Ordered tokens of one sentence. Tokens are never empty and never contain
/// whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<Token>,
}

impl TokenSeq {
    /// Builds a sequence from prepared tokens, dropping empty ones.
    ///
    /// Panics if a token contains whitespace.
    pub fn from_tokens(tokens: impl IntoIterator<Item = Token>) -> Self {
        let tokens: Vec<Token> = tokens.into_iter().filter(|t| !t.text.is_empty()).collect();
        assert!(
            tokens.iter().all(|t| !t.text.chars().any(char::is_whitespace)),
            "token contains whitespace"
        );
        Self { tokens }
    }

    /// Whitespace-split words, all tagged `Word`. Handy for tests and BLEU oracles.
    pub fn from_words(text: &str) -> Self {
        Self {
            tokens: text.split_whitespace().map(Token::word).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn iter(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    /// Word and digit token texts, in order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().filter(|t| t.is_term()).map(|t| t.text.as_str())
    }

    pub fn term_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_term()).count()
    }

    fn push(&mut self, text: String, kind: TokenKind) {
        if !text.is_empty() {
            self.tokens.push(Token { text, kind });
        }
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a Token;
    type IntoIter = std::slice::Iter<'a, Token>;

    fn into_iter(self) -> Self::IntoIter {
        self.tokens.iter()
    }
}

/// Japanese segmentation mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JaSegmentation {
    /// Maximal single-script runs.
    #[default]
    ScriptRun,
    /// Overlapping character bigrams inside each script-run word.
    CharBigram,
    /// One token per character.
    Char,
}

/// Corpus side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Vi,
    Ja,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Vi => "vi",
            Side::Ja => "ja",
        })
    }
}

/// Tokenizes one side's text with that side's tokenizer.
pub fn tokenize_side(text: &str, side: Side, ja: JaSegmentation) -> TokenSeq {
    match side {
        Side::Vi => tokenize_vi(text),
        Side::Ja => tokenize_ja_with(text, ja),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ViClass {
    Space,
    Word,
    Digit,
    Punct,
}

fn vi_class(c: char) -> ViClass {
    if c.is_whitespace() {
        ViClass::Space
    } else if c.is_alphabetic() || is_combining_mark(c) {
        ViClass::Word
    } else if c.is_numeric() {
        ViClass::Digit
    } else {
        ViClass::Punct
    }
}

/// Letters-or-marks runs (word), digit runs (digit), single punctuation chars.
pub fn tokenize_vi(text: &str) -> TokenSeq {
    let mut seq = TokenSeq::default();
    let mut run = String::new();
    let mut run_class = ViClass::Space;

    for c in text.chars() {
        let class = vi_class(c);
        if class != run_class || class == ViClass::Punct {
            flush(&mut seq, &mut run, vi_kind(run_class));
            run_class = class;
        }
        if class != ViClass::Space {
            run.push(c);
        }
    }
    flush(&mut seq, &mut run, vi_kind(run_class));
    seq
}

fn vi_kind(class: ViClass) -> TokenKind {
    match class {
        ViClass::Digit => TokenKind::Digit,
        ViClass::Punct => TokenKind::Punct,
        ViClass::Word | ViClass::Space => TokenKind::Word,
    }
}

fn flush(seq: &mut TokenSeq, run: &mut String, kind: TokenKind) {
    if !run.is_empty() {
        seq.push(std::mem::take(run), kind);
    }
}

/// Script classes a Japanese run may belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptClass {
    Han,
    Hiragana,
    Katakana,
    Latin,
    /// Letters of any other script; runs still split on script changes.
    Other(Script),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum JaClass {
    Space,
    Punct,
    Digit,
    Letter(ScriptClass),
    /// Combining mark: extends whatever run precedes it.
    Mark,
    /// U+30FC: extends a kana run, otherwise behaves as Katakana.
    ProlongedSound,
}

const PROLONGED_SOUND_MARK: char = '\u{30FC}';

/// The script class used for Japanese segmentation, or `None` for
/// non-letters and combining marks.
pub fn script_class(c: char) -> Option<ScriptClass> {
    match ja_class(c) {
        JaClass::Letter(s) => Some(s),
        JaClass::ProlongedSound => Some(ScriptClass::Katakana),
        _ => None,
    }
}

fn ja_class(c: char) -> JaClass {
    if c.is_whitespace() {
        return JaClass::Space;
    }
    if c == PROLONGED_SOUND_MARK {
        return JaClass::ProlongedSound;
    }
    if c.is_alphabetic() || is_combining_mark(c) {
        return match c.script() {
            Script::Han => JaClass::Letter(ScriptClass::Han),
            Script::Hiragana => JaClass::Letter(ScriptClass::Hiragana),
            Script::Katakana => JaClass::Letter(ScriptClass::Katakana),
            Script::Latin => JaClass::Letter(ScriptClass::Latin),
            Script::Inherited => JaClass::Mark,
            other => JaClass::Letter(ScriptClass::Other(other)),
        };
    }
    if c.is_numeric() {
        JaClass::Digit
    } else {
        JaClass::Punct
    }
}

/// Script-run segmentation (the default Japanese tokenizer).
pub fn tokenize_ja(text: &str) -> TokenSeq {
    let mut seq = TokenSeq::default();
    let mut run = String::new();
    // class of the run being accumulated; Space means "no open run"
    let mut current = JaClass::Space;

    for c in text.chars() {
        let class = match ja_class(c) {
            JaClass::Mark if matches!(current, JaClass::Letter(_) | JaClass::Digit) => current,
            JaClass::Mark => JaClass::Letter(ScriptClass::Other(Script::Inherited)),
            JaClass::ProlongedSound => match current {
                JaClass::Letter(ScriptClass::Hiragana) | JaClass::Letter(ScriptClass::Katakana) => current,
                _ => JaClass::Letter(ScriptClass::Katakana),
            },
            other => other,
        };

        if class != current || class == JaClass::Punct {
            flush(&mut seq, &mut run, ja_kind(current));
            current = class;
        }
        if class != JaClass::Space {
            run.push(c);
        }
    }
    flush(&mut seq, &mut run, ja_kind(current));
    seq
}

fn ja_kind(class: JaClass) -> TokenKind {
    match class {
        JaClass::Digit => TokenKind::Digit,
        JaClass::Punct => TokenKind::Punct,
        _ => TokenKind::Word,
    }
}

/// Japanese tokenization in the requested mode.
pub fn tokenize_ja_with(text: &str, mode: JaSegmentation) -> TokenSeq {
    let runs = tokenize_ja(text);
    match mode {
        JaSegmentation::ScriptRun => runs,
        JaSegmentation::CharBigram => {
            let mut seq = TokenSeq::default();
            for token in runs.tokens {
                let chars: Vec<char> = token.text.chars().collect();
                if token.kind == TokenKind::Word && chars.len() >= 2 {
                    for pair in chars.windows(2) {
                        seq.push(pair.iter().collect(), TokenKind::Word);
                    }
                } else {
                    seq.push(token.text, token.kind);
                }
            }
            seq
        }
        JaSegmentation::Char => {
            let mut seq = TokenSeq::default();
            for token in runs.tokens {
                for c in token.text.chars() {
                    seq.push(c.to_string(), token.kind);
                }
            }
            seq
        }
    }
}
