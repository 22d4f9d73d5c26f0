//! Count-based n-gram language model with add-α smoothing.
//!
//! The probability of `w` after context `h` (the previous `order - 1`
//! tokens, padded with `<s>`) is
//!
//! ```text
//! p(w | h) = (c(h, w) + α) / (c(h) + α·|V|)
//! ```
//!
//! where `V` holds every training token plus `</s>` and `<unk>`. Contexts
//! never seen in training get the uniform distribution.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const LM_HEADER: &str = "fec-ngram-lm v1";

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("smoothing constant must be positive, got {0}")]
    BadAlpha(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub order: usize,
    pub alpha: f64,
    /// Tokens seen fewer times than this are folded into `<unk>`.
    pub min_count: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { order: 3, alpha: 0.1, min_count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramLM {
    config: LmConfig,
    vocab: BTreeSet<String>,
    unigrams: HashMap<String, u64>,
    ngrams: HashMap<Vec<String>, Successors>,
}

/// Counts of the tokens seen after one context, with their total.
#[derive(Debug, Clone, PartialEq, Default)]
struct Successors {
    total: u64,
    next: HashMap<String, u64>,
}

impl Successors {
    fn add(&mut self, w: String, c: u64) {
        self.total += c;
        *self.next.entry(w).or_insert(0) += c;
    }
}

#[derive(Serialize, Deserialize)]
struct StoredLm {
    config: LmConfig,
    vocab: Vec<String>,
    unigrams: BTreeMap<String, u64>,
    ngrams: Vec<(Vec<String>, String, u64)>,
}

/// Train on tokenized sentences.
pub fn train_lm<S: AsRef<[String]>>(corpus: &[S], config: LmConfig) -> Result<NGramLM, LmError> {
    if config.order == 0 {
        return Err(LmError::ZeroOrder);
    }
    if !(config.alpha > 0.0) || !config.alpha.is_finite() {
        return Err(LmError::BadAlpha(config.alpha));
    }
    let total: usize = corpus.iter().map(|s| s.as_ref().len()).sum();
    if total == 0 {
        return Err(LmError::EmptyCorpus);
    }
    let mut raw: HashMap<&str, u64> = HashMap::new();
    for s in corpus {
        for t in s.as_ref() {
            *raw.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut vocab: BTreeSet<String> = raw
        .iter()
        .filter(|&(_, &c)| c >= config.min_count)
        .map(|(t, _)| t.to_string())
        .collect();
    vocab.insert(EOS.to_string());
    vocab.insert(UNK.to_string());

    let mut lm = NGramLM {
        config,
        vocab,
        unigrams: HashMap::new(),
        ngrams: HashMap::new(),
    };
    for s in corpus {
        let mapped: Vec<String> = s.as_ref().iter().map(|t| lm.map_token(t).to_string()).collect();
        for (i, w) in mapped.iter().map(String::as_str).chain(std::iter::once(EOS)).enumerate() {
            let ctx = lm.context_of(&mapped[..i]);
            *lm.unigrams.entry(w.to_string()).or_insert(0) += 1;
            lm.ngrams.entry(ctx).or_default().add(w.to_string(), 1);
        }
    }
    Ok(lm)
}

impl NGramLM {
    pub fn config(&self) -> LmConfig {
        self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    /// Size of the predicted vocabulary, including `</s>` and `<unk>`.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str)
    }

    pub fn contains(&self, tok: &str) -> bool {
        tok != BOS && self.vocab.contains(tok)
    }

    pub fn map_token<'a>(&self, tok: &'a str) -> &'a str {
        if self.contains(tok) {
            tok
        } else {
            UNK
        }
    }

    pub fn unigram_count(&self, tok: &str) -> u64 {
        self.unigrams.get(tok).copied().unwrap_or(0)
    }

    /// Context for predicting the token after `history`: the last `order - 1`
    /// tokens, left-padded with `<s>`, with unknown tokens mapped to `<unk>`.
    pub fn context_of<S: AsRef<str>>(&self, history: &[S]) -> Vec<String> {
        let width = self.config.order - 1;
        let mut ctx = Vec::with_capacity(width);
        let take = history.len().min(width);
        for _ in take..width {
            ctx.push(BOS.to_string());
        }
        for t in &history[history.len() - take..] {
            ctx.push(self.map_token(t.as_ref()).to_string());
        }
        ctx
    }

    pub fn count(&self, context: &[String], word: &str) -> u64 {
        self.ngrams.get(context).and_then(|m| m.next.get(word)).copied().unwrap_or(0)
    }

    pub fn context_count(&self, context: &[String]) -> u64 {
        self.ngrams.get(context).map_or(0, |m| m.total)
    }

    /// p(word | context) with `context` already in model form (see [`Self::context_of`]).
    pub fn prob_ctx(&self, context: &[String], word: &str) -> f64 {
        let w = self.map_token(word);
        let alpha = self.config.alpha;
        let (c, total) = match self.ngrams.get(context) {
            Some(m) => (m.next.get(w).copied().unwrap_or(0), m.total),
            None => (0, 0),
        };
        (c as f64 + alpha) / (total as f64 + alpha * self.vocab_size() as f64)
    }

    /// p(word | history).
    pub fn prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        self.prob_ctx(&self.context_of(history), word)
    }

    /// ln p of each token of `cont` (then `</s>` when `eos`) following `history`.
    /// Contexts are slices of one padded buffer rather than fresh allocations.
    pub fn continuation_log_probs<S: AsRef<str>, T: AsRef<str>>(&self, history: &[S], cont: &[T], eos: bool) -> Vec<f64> {
        let width = self.config.order - 1;
        let mut padded = self.context_of(history);
        padded.reserve(cont.len() + 1);
        padded.extend(cont.iter().map(|t| self.map_token(t.as_ref()).to_string()));
        if eos {
            padded.push(EOS.to_string());
        }
        (width..padded.len()).map(|i| self.prob_ctx(&padded[i - width..i], &padded[i]).ln()).collect()
    }

    fn log_probs<S: AsRef<str>>(&self, seq: &[S], eos: bool) -> Vec<f64> {
        self.continuation_log_probs::<&str, S>(&[], seq, eos)
    }

    /// −ln p(token_i | preceding tokens) for every position.
    pub fn token_surprisals<S: AsRef<str>>(&self, seq: &[S]) -> Vec<f64> {
        self.log_probs(seq, false).into_iter().map(|l| -l).collect()
    }

    /// Total log-probability of the tokens (end-of-sentence not included).
    pub fn score_sequence<S: AsRef<str>>(&self, seq: &[S]) -> f64 {
        self.log_probs(seq, false).iter().sum()
    }

    /// Log-probability of the tokens followed by `</s>`.
    pub fn score_sentence<S: AsRef<str>>(&self, seq: &[S]) -> f64 {
        self.log_probs(seq, true).iter().sum()
    }

    /// Most probable real token after `history`; ties go to the smallest token.
    pub fn predict_next<S: AsRef<str>>(&self, history: &[S]) -> Option<String> {
        let ctx = self.context_of(history);
        let mut best: Option<(&str, u64)> = None;
        for w in self.vocab.iter().map(String::as_str) {
            if w == EOS || w == UNK {
                continue;
            }
            let c = self.count(&ctx, w);
            // vocab iterates in sorted order, so strict > keeps the smallest on ties
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((w, c));
            }
        }
        best.map(|(w, _)| w.to_string())
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), LmError> {
        let mut ngrams: Vec<(Vec<String>, String, u64)> = self
            .ngrams
            .iter()
            .flat_map(|(ctx, m)| m.next.iter().map(move |(w, &c)| (ctx.clone(), w.clone(), c)))
            .collect();
        ngrams.sort();
        let stored = StoredLm {
            config: self.config,
            vocab: self.vocab.iter().cloned().collect(),
            unigrams: self.unigrams.iter().map(|(k, &v)| (k.clone(), v)).collect(),
            ngrams,
        };
        writeln!(w, "{LM_HEADER}")?;
        serde_json::to_writer(&mut w, &stored).map_err(|e| LmError::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn load<R: BufRead>(mut r: R) -> Result<Self, LmError> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        if header.trim_end() != LM_HEADER {
            return Err(LmError::Format(format!("unsupported header {:?}", header.trim_end())));
        }
        let stored: StoredLm = serde_json::from_reader(r).map_err(|e| LmError::Format(e.to_string()))?;
        let mut ngrams: HashMap<Vec<String>, Successors> = HashMap::new();
        for (ctx, w, c) in stored.ngrams {
            ngrams.entry(ctx).or_default().add(w, c);
        }
        Ok(NGramLM {
            config: stored.config,
            vocab: stored.vocab.into_iter().collect(),
            unigrams: stored.unigrams.into_iter().collect(),
            ngrams,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use proptest::prelude::*;

    fn sents(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l).tokens).collect()
    }

    fn cfg(order: usize, alpha: f64) -> LmConfig {
        LmConfig { order, alpha, min_count: 1 }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(train_lm::<Vec<String>>(&[], LmConfig::default()), Err(LmError::EmptyCorpus)));
        assert!(matches!(train_lm(&sents(&["a"]), cfg(0, 0.1)), Err(LmError::ZeroOrder)));
        assert!(matches!(train_lm(&sents(&["a"]), cfg(2, 0.0)), Err(LmError::BadAlpha(_))));
    }

    #[test]
    fn deterministic_continuation_in_small_alpha_limit() {
        let lm = train_lm(&sents(&["a b a b"]), cfg(2, 1e-9)).unwrap();
        assert!((lm.prob(&["a"], "b") - 1.0).abs() < 1e-8);
        assert!(lm.token_surprisals(&["a", "b"])[1] < 1e-8);
    }

    // Hand corpus (10 tokens): "a b c a" / "b a c" / "a b c".
    // Bigram counts with context a: (a,b)=2 (a,c)=1 (a,</s>)=1, c(a)=4.
    // V = {a, b, c, </s>, <unk>}, |V| = 5.
    #[test]
    fn add_alpha_matches_hand_computation() {
        let lm = train_lm(&sents(&["a b c a", "b a c", "a b c"]), cfg(2, 0.1)).unwrap();
        assert_eq!(lm.vocab_size(), 5);
        let p = |h: &str, w: &str, num: f64, den: f64| {
            let got = lm.prob(&[h], w);
            assert!((got - num / den).abs() < 1e-12, "p({w}|{h}) = {got}, want {}", num / den);
        };
        p("a", "b", 2.1, 4.5);
        p("a", "c", 1.1, 4.5);
        p("a", "a", 0.1, 4.5);
        p("a", "zzz", 0.1, 4.5);
        // c: (c,a)=1 (c,</s>)=2
        p("c", "a", 1.1, 3.5);
        p("c", "b", 0.1, 3.5);
        // <s>: (<s>,a)=2 (<s>,b)=1
        assert!((lm.prob::<&str>(&[], "a") - 2.1 / 3.5).abs() < 1e-12);
    }

    #[test]
    fn surprisals_match_hand_computation() {
        let lm = train_lm(&sents(&["a b c a", "b a c", "a b c"]), cfg(2, 0.1)).unwrap();
        // b after c: count 0, c(c)=3; a after b: (b,a)=1 of c(b)=3 [(b,c)=2,(b,a)=1]
        let seq = ["a", "b", "c", "b", "a"];
        let want = [
            -(2.1f64 / 3.5).ln(),
            -(2.1f64 / 4.5).ln(),
            -(2.1f64 / 3.5).ln(),
            -(0.1f64 / 3.5).ln(),
            -(1.1f64 / 3.5).ln(),
        ];
        let got = lm.token_surprisals(&seq);
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-9, "{got:?}");
        }
        let score = lm.score_sequence(&seq[..3]);
        let hand = (2.1f64 / 3.5).ln() + (2.1f64 / 4.5).ln() + (2.1f64 / 3.5).ln();
        assert!((score - hand).abs() < 1e-9);
        assert!((score + lm.token_surprisals(&seq[..3]).iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn unknown_token_more_surprising_than_frequent() {
        let lm = train_lm(&sents(&["the cat sat", "the dog sat", "the cat ran"]), LmConfig::default()).unwrap();
        let frequent = lm.token_surprisals(&["the", "cat"])[1];
        let unknown = lm.token_surprisals(&["the", "zebra"])[1];
        assert!(unknown > frequent);
        let base = lm.score_sequence(&["the", "cat"]);
        assert!(lm.score_sequence(&["the", "cat", "zebra"]) < base);
    }

    #[test]
    fn min_count_folds_rare_tokens() {
        let lm = train_lm(&sents(&["a a b"]), LmConfig { order: 1, alpha: 0.1, min_count: 2 }).unwrap();
        assert!(lm.contains("a"));
        assert!(!lm.contains("b"));
        assert_eq!(lm.unigram_count(UNK), 1);
    }

    #[test]
    fn predict_next_prefers_seen_continuation() {
        let lm = train_lm(&sents(&["x y z", "x y w", "x y z"]), cfg(3, 0.1)).unwrap();
        assert_eq!(lm.predict_next(&["x", "y"]).as_deref(), Some("z"));
    }

    #[test]
    fn persistence_round_trip() {
        let lm = train_lm(&sents(&["a b c a", "b a c"]), LmConfig::default()).unwrap();
        let mut buf = Vec::new();
        lm.save(&mut buf).unwrap();
        let back = NGramLM::load(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, lm);
    }

    proptest! {
        #[test]
        fn distributions_normalize(
            corpus in proptest::collection::vec(proptest::collection::vec("[a-e]", 1..8), 1..6),
            ctx in proptest::collection::vec("[a-g]", 0..3),
            order in 1usize..4,
        ) {
            let lm = train_lm(&corpus, cfg(order, 0.1)).unwrap();
            let c = lm.context_of(&ctx);
            let total: f64 = lm.vocab().map(|w| lm.prob_ctx(&c, w)).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(lm.vocab().all(|w| lm.prob_ctx(&c, w) > 0.0));
        }

        #[test]
        fn more_counts_never_more_surprising(
            corpus in proptest::collection::vec(proptest::collection::vec("[a-d]", 1..6), 1..5),
            h in "[a-d]",
            w in "[a-d]",
        ) {
            prop_assume!(h != w);
            let lm = train_lm(&corpus, cfg(2, 0.1)).unwrap();
            let mut more = corpus.clone();
            more.push(vec![h.clone(), w.clone()]);
            let lm2 = train_lm(&more, cfg(2, 0.1)).unwrap();
                        let before = -lm.prob(&[h.as_str()], &w).ln();
            let after = -lm2.prob(&[h.as_str()], &w).ln();
            if lm.vocab_size() == lm2.vocab_size() {
                prop_assert!(after <= before + 1e-12);
            }
        }
    }
}
