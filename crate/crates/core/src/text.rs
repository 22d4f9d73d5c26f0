//! Tokenization, n-gram multisets and the shared label type.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Placeholder written in place of masked tokens.
pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TextError {
    #[error("n-gram order must be in 1..=4, got {0}")]
    InvalidOrder(usize),
}

/// A tokenized sentence together with the text it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub original: String,
}

impl TokenSeq {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        let original = tokens.join(" ");
        TokenSeq { tokens, original }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined tokens. Re-tokenizing the result yields the same tokens.
    pub fn detokenize(&self) -> String {
        self.tokens.join(" ")
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

fn normalize_token(raw: &str) -> String {
    raw.nfc().collect::<String>().to_lowercase().nfc().collect()
}

/// Tokens with byte ranges into the NFC form of `text`.
///
/// Runs of letters, digits and combining marks form one token; every other
/// non-whitespace character is a token of its own.
pub fn tokenize_with_spans(text: &str) -> (String, Vec<(String, Range<usize>)>) {
    let normalized: String = text.nfc().collect();
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in normalized.char_indices() {
        if is_word_char(c) {
            if word_start.is_none() {
                word_start = Some(i);
            }
            continue;
        }
        if let Some(s) = word_start.take() {
            out.push((normalize_token(&normalized[s..i]), s..i));
        }
        if !c.is_whitespace() {
            let end = i + c.len_utf8();
            out.push((normalize_token(&normalized[i..end]), i..end));
        }
    }
    if let Some(s) = word_start {
        out.push((normalize_token(&normalized[s..]), s..normalized.len()));
    }
    // Lowercasing can, in rare scripts, produce characters of a different
    // class; resplit so that tokenize(detokenize(x)) is a fixed point.
    let out = out
        .into_iter()
        .flat_map(|(tok, span)| {
            if tok.chars().all(is_word_char) || tok.chars().count() == 1 {
                vec![(tok, span)]
            } else {
                resplit(&tok).into_iter().map(|t| (t, span.clone())).collect()
            }
        })
        .collect();
    (normalized, out)
}

fn resplit(tok: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut word = String::new();
    for c in tok.chars() {
        if is_word_char(c) {
            word.push(c);
        } else {
            if !word.is_empty() {
                parts.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                parts.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        parts.push(word);
    }
    parts
}

/// Lowercased, NFC-normalized tokens with punctuation split off.
pub fn tokenize(text: &str) -> TokenSeq {
    let (_, toks) = tokenize_with_spans(text);
    TokenSeq {
        tokens: toks.into_iter().map(|(t, _)| t).collect(),
        original: text.to_string(),
    }
}

/// True when the token carries lexical content (contains a letter or digit).
pub fn is_content_token(tok: &str) -> bool {
    tok.chars().any(char::is_alphanumeric)
}

/// Multiset of contiguous n-grams of a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NGramMultiset {
    pub n: usize,
    pub counts: BTreeMap<Vec<String>, usize>,
}

impl NGramMultiset {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Multiset intersection (pointwise min).
    pub fn intersect(&self, other: &NGramMultiset) -> NGramMultiset {
        let counts = self
            .counts
            .iter()
            .filter_map(|(g, &c)| {
                let m = c.min(other.get(g));
                (m > 0).then(|| (g.clone(), m))
            })
            .collect();
        NGramMultiset { n: self.n, counts }
    }

    /// Multiset difference with saturation at zero.
    pub fn difference(&self, other: &NGramMultiset) -> NGramMultiset {
        let counts = self
            .counts
            .iter()
            .filter_map(|(g, &c)| {
                let d = c.saturating_sub(other.get(g));
                (d > 0).then(|| (g.clone(), d))
            })
            .collect();
        NGramMultiset { n: self.n, counts }
    }
}

/// All contiguous n-grams of `tokens`, with multiplicity.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> Result<NGramMultiset, TextError> {
    if !(1..=4).contains(&n) {
        return Err(TextError::InvalidOrder(n));
    }
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let gram: Vec<String> = w.iter().map(|t| t.as_ref().to_string()).collect();
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    Ok(NGramMultiset { n, counts })
}

/// Veracity of a claim with respect to evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerdictLabel {
    #[serde(rename = "SUPPORTS")]
    Supports,
    #[serde(rename = "REFUTES")]
    Refutes,
    #[serde(rename = "NOT_ENOUGH_INFO", alias = "NOT ENOUGH INFO")]
    NotEnoughInfo,
}

impl VerdictLabel {
    pub const ALL: [VerdictLabel; 3] = [
        VerdictLabel::Supports,
        VerdictLabel::Refutes,
        VerdictLabel::NotEnoughInfo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictLabel::Supports => "SUPPORTS",
            VerdictLabel::Refutes => "REFUTES",
            VerdictLabel::NotEnoughInfo => "NOT_ENOUGH_INFO",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerdictLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SUPPORTS" => Ok(VerdictLabel::Supports),
            "REFUTES" => Ok(VerdictLabel::Refutes),
            "NOT_ENOUGH_INFO" | "NOT ENOUGH INFO" => Ok(VerdictLabel::NotEnoughInfo),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_punctuation() {
        let t = tokenize("Paris is the capital of France.");
        assert_eq!(t.tokens, ["paris", "is", "the", "capital", "of", "france", "."]);
        let t = tokenize("Exit the King is by man.");
        assert_eq!(t.tokens, ["exit", "the", "king", "is", "by", "man", "."]);
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn nfc_before_tokenizing() {
        // decomposed e + combining acute vs precomposed
        assert_eq!(tokenize("Cafe\u{301}").tokens, tokenize("Caf\u{e9}").tokens);
    }

    #[test]
    fn spans_point_into_normalized_text() {
        let (norm, toks) = tokenize_with_spans("Hello, World!");
        let pieces: Vec<&str> = toks.iter().map(|(_, r)| &norm[r.clone()]).collect();
        assert_eq!(pieces, ["Hello", ",", "World", "!"]);
    }

    #[test]
    fn ngram_counts() {
        let m = ngrams(&["a", "b", "a"], 1).unwrap();
        assert_eq!(m.get(&["a".to_string()]), 2);
        assert_eq!(m.get(&["b".to_string()]), 1);
        let m = ngrams(&["a", "b", "a"], 2).unwrap();
        assert_eq!(m.counts.len(), 2);
        assert_eq!(m.get(&["a".into(), "b".into()]), 1);
        assert_eq!(m.get(&["b".into(), "a".into()]), 1);
        assert!(ngrams(&["a"], 2).unwrap().is_empty());
    }

    #[test]
    fn ngram_order_bounds() {
        assert_eq!(ngrams(&["a"], 0), Err(TextError::InvalidOrder(0)));
        assert_eq!(ngrams(&["a"], 5), Err(TextError::InvalidOrder(5)));
    }

    #[test]
    fn label_parsing() {
        assert_eq!("NOT ENOUGH INFO".parse::<VerdictLabel>(), Ok(VerdictLabel::NotEnoughInfo));
        assert!("MAYBE".parse::<VerdictLabel>().is_err());
    }

    proptest! {
        #[test]
        fn detokenize_round_trip(s in "\\PC{0,40}") {
            let t = tokenize(&s);
            prop_assert_eq!(tokenize(&t.detokenize()).tokens, t.tokens.clone());
            if !s.trim().is_empty() {
                prop_assert!(!t.is_empty());
            }
        }

        #[test]
        fn ngram_total(toks in proptest::collection::vec("[a-d]", 0..12), n in 1usize..=4) {
            let m = ngrams(&toks, n).unwrap();
            prop_assert_eq!(m.total(), toks.len().saturating_sub(n - 1));
        }
    }
}
