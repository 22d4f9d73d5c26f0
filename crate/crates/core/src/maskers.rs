//! Maskers choose which claim tokens a corrector should rewrite.
//!
//! Four strategies are provided: uniform random masking, a heuristic that
//! masks tokens missing from the evidence, LM surprisal ranking, and a
//! black-box explanation of a veracity classifier obtained by fitting a
//! weighted linear surrogate on random token-drop perturbations.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lm::NGramLM;
use crate::retrieval::{sentence_ranges, EvidenceSet};
use crate::text::{is_content_token, TokenSeq, VerdictLabel, MASK_TOKEN};

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("invalid masker config: {0}")]
    Config(String),
    #[error("classifier failed on sample {sample}: {source}")]
    Classifier { sample: usize, source: ClassifierError },
    #[error("surprisal masker needs a language model")]
    MissingLm,
    #[error("the {0} masker is not available")]
    Unsupported(MaskStrategy),
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct ClassifierError(pub String);

/// A claim with a boolean mask over its tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedClaim {
    pub tokens: TokenSeq,
    pub mask: Vec<bool>,
}

impl MaskedClaim {
    pub fn new(tokens: TokenSeq, mask: Vec<bool>) -> Self {
        assert_eq!(tokens.len(), mask.len(), "mask length must match token count");
        MaskedClaim { tokens, mask }
    }

    pub fn unmasked(tokens: TokenSeq) -> Self {
        let mask = vec![false; tokens.len()];
        MaskedClaim { tokens, mask }
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    /// Tokens with `[MASK]` at masked positions.
    pub fn rendered_tokens(&self) -> Vec<&str> {
        self.tokens
            .tokens
            .iter()
            .zip(&self.mask)
            .map(|(t, &m)| if m { MASK_TOKEN } else { t.as_str() })
            .collect()
    }

    pub fn render(&self) -> String {
        self.rendered_tokens().join(" ")
    }

    /// Maximal runs of masked positions.
    pub fn runs(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, &m) in self.mask.iter().enumerate() {
            match (m, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push(s..i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push(s..self.mask.len());
        }
        out
    }

    pub fn longest_run(&self) -> usize {
        self.runs().iter().map(|r| r.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskStrategy {
    Random,
    Heuristic,
    Surprisal,
    Perturbation,
    /// Reserved for a white-box masker reading classifier internals.
    WhiteBox,
}

impl MaskStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskStrategy::Random => "random",
            MaskStrategy::Heuristic => "heuristic",
            MaskStrategy::Surprisal => "surprisal",
            MaskStrategy::Perturbation => "perturbation",
            MaskStrategy::WhiteBox => "whitebox",
        }
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(MaskStrategy::Random),
            "heuristic" => Ok(MaskStrategy::Heuristic),
            "surprisal" => Ok(MaskStrategy::Surprisal),
            "perturbation" | "lime" => Ok(MaskStrategy::Perturbation),
            "whitebox" => Ok(MaskStrategy::WhiteBox),
            other => Err(format!("unknown masker {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskerConfig {
    pub strategy: MaskStrategy,
    pub mask_ratio: f64,
    pub lime_samples: usize,
    pub lime_features: usize,
    /// Surrogate kernel width; `None` means 0.75·sqrt(n) for an n-token claim.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for MaskerConfig {
    fn default() -> Self {
        MaskerConfig {
            strategy: MaskStrategy::Heuristic,
            mask_ratio: 0.5,
            lime_samples: 250,
            lime_features: 6,
            kernel_width: None,
            ridge: 1.0,
            seed: 0,
        }
    }
}

impl MaskerConfig {
    pub fn with_strategy(strategy: MaskStrategy) -> Self {
        MaskerConfig { strategy, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        if !(self.mask_ratio > 0.0 && self.mask_ratio <= 1.0) {
            return Err(MaskError::Config(format!("mask_ratio must be in (0, 1], got {}", self.mask_ratio)));
        }
        if self.lime_samples < 10 {
            return Err(MaskError::Config(format!("lime_samples must be at least 10, got {}", self.lime_samples)));
        }
        if self.lime_features < 1 {
            return Err(MaskError::Config("lime_features must be at least 1".into()));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0) {
                return Err(MaskError::Config(format!("kernel_width must be positive, got {w}")));
            }
        }
        if self.ridge < 0.0 {
            return Err(MaskError::Config("ridge must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Mix a base seed with a record id so per-record randomness does not depend on processing order.
pub fn derive_seed(seed: u64, id: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn masked_count(ratio: f64, n: usize) -> usize {
    // guard against ratio·n landing a hair above an integer
    let k = (ratio * n as f64 - 1e-9).ceil();
    (k.max(0.0) as usize).min(n)
}

/// Mask ceil(ratio·n) positions chosen uniformly without replacement.
pub fn mask_random(claim: &TokenSeq, ratio: f64, seed: u64) -> MaskedClaim {
    let n = claim.len();
    let k = masked_count(ratio, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, k) {
        mask[i] = true;
    }
    MaskedClaim::new(claim.clone(), mask)
}

/// Mask every token that does not occur in any evidence passage.
pub fn mask_heuristic(claim: &TokenSeq, evidence: &EvidenceSet) -> MaskedClaim {
    let vocab = evidence.token_set();
    let mask = claim.tokens.iter().map(|t| !vocab.contains(t.as_str())).collect();
    MaskedClaim::new(claim.clone(), mask)
}

/// Mask the ceil(ratio·n) most surprising tokens; ties go to the leftmost.
pub fn mask_surprisal(claim: &TokenSeq, lm: &NGramLM, ratio: f64) -> MaskedClaim {
    let n = claim.len();
    let k = masked_count(ratio, n);
    let surprisal = lm.token_surprisals(&claim.tokens);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| surprisal[b].total_cmp(&surprisal[a]).then(a.cmp(&b)));
    let mut mask = vec![false; n];
    for &i in &order[..k] {
        mask[i] = true;
    }
    MaskedClaim::new(claim.clone(), mask)
}

/// Probability distribution over veracity labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictScore {
    /// Indexed by [`VerdictLabel::index`].
    pub probs: [f64; 3],
}

impl VerdictScore {
    pub fn new(supports: f64, refutes: f64, nei: f64) -> Self {
        VerdictScore { probs: [supports, refutes, nei] }
    }

    pub fn prob(&self, label: VerdictLabel) -> f64 {
        self.probs[label.index()]
    }

    /// Most probable label; ties resolve in SUPPORTS, REFUTES, NOT_ENOUGH_INFO order.
    pub fn argmax(&self) -> VerdictLabel {
        let mut best = VerdictLabel::Supports;
        for l in VerdictLabel::ALL {
            if self.prob(l) > self.prob(best) {
                best = l;
            }
        }
        best
    }
}

/// A claim-vs-evidence veracity model that the perturbation masker can query.
pub trait VerdictClassifier {
    fn classify(&self, claim: &[String], evidence: &EvidenceSet) -> Result<VerdictScore, ClassifierError>;
}

impl<F> VerdictClassifier for F
where
    F: Fn(&[String], &EvidenceSet) -> Result<VerdictScore, ClassifierError>,
{
    fn classify(&self, claim: &[String], evidence: &EvidenceSet) -> Result<VerdictScore, ClassifierError> {
        self(claim, evidence)
    }
}

const NEGATORS: [&str; 9] = ["not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "cannot"];

/// Rule-based veracity scorer over token overlap and contradiction cues.
///
/// With `s` the fraction of claim content tokens found in the evidence:
///
/// | case                              | SUPPORTS | REFUTES     | NOT_ENOUGH_INFO |
/// |-----------------------------------|----------|-------------|-----------------|
/// | no content tokens                 | 0.1      | 0.1         | 0.8             |
/// | contradiction cue                 | 0.05     | 0.2 + 0.7·s | 0.75 − 0.7·s    |
/// | otherwise                         | 0.9·s    | 0.05        | 0.95 − 0.9·s    |
///
/// A contradiction cue needs `s > 0` and the evidence sentence sharing the
/// most content tokens with the claim (the aligned sentence). It fires when
/// exactly one of claim and aligned sentence contains a negator, or when a
/// claim content token missing from the evidence sits next to a token whose
/// neighbour in the aligned sentence, on the same side, is a content token
/// absent from the claim (a substituted slot).
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalVerdict;

impl VerdictClassifier for LexicalVerdict {
    fn classify(&self, claim: &[String], evidence: &EvidenceSet) -> Result<VerdictScore, ClassifierError> {
        Ok(lexical_verdict(claim, evidence))
    }
}

fn aligned_sentence<'a>(claim_content: &HashSet<&str>, evidence: &'a EvidenceSet) -> Option<&'a [String]> {
    let mut best: Option<(&[String], usize)> = None;
    for item in &evidence.items {
        let toks = &item.passage.tokens.tokens;
        for r in sentence_ranges(toks) {
            let sent = &toks[r];
            let shared: HashSet<&str> = sent.iter().map(String::as_str).filter(|t| claim_content.contains(t)).collect();
            if best.is_none_or(|(_, b)| shared.len() > b) {
                best = Some((sent, shared.len()));
            }
        }
    }
    best.filter(|&(_, n)| n > 0).map(|(s, _)| s)
}

fn has_negator<S: AsRef<str>>(toks: &[S]) -> bool {
    toks.iter().any(|t| NEGATORS.contains(&t.as_ref()))
}

fn slot_mismatch(claim: &[String], aligned: &[String], evidence_vocab: &HashSet<&str>) -> bool {
    let claim_set: HashSet<&str> = claim.iter().map(String::as_str).collect();
    let foreign = |t: &str| is_content_token(t) && !claim_set.contains(t);
    for (i, tok) in claim.iter().enumerate() {
        if !is_content_token(tok) || evidence_vocab.contains(tok.as_str()) {
            continue;
        }
        if i > 0 {
            let prev = &claim[i - 1];
            for j in 0..aligned.len().saturating_sub(1) {
                if &aligned[j] == prev && foreign(&aligned[j + 1]) {
                    return true;
                }
            }
        }
        if i + 1 < claim.len() {
            let next = &claim[i + 1];
            for j in 1..aligned.len() {
                if &aligned[j] == next && foreign(&aligned[j - 1]) {
                    return true;
                }
            }
        }
    }
    false
}

/// The fixed piecewise rule of [`LexicalVerdict`].
pub fn lexical_verdict(claim: &[String], evidence: &EvidenceSet) -> VerdictScore {
    let content: Vec<&str> = claim.iter().map(String::as_str).filter(|t| is_content_token(t)).collect();
    if content.is_empty() {
        return VerdictScore::new(0.1, 0.1, 0.8);
    }
    let vocab = evidence.token_set();
    let covered = content.iter().filter(|t| vocab.contains(*t)).count();
    let s = covered as f64 / content.len() as f64;
    let content_set: HashSet<&str> = content.iter().copied().collect();
    let cue = s > 0.0
        && aligned_sentence(&content_set, evidence).is_some_and(|sent| {
            has_negator(claim) != has_negator(sent) || slot_mismatch(claim, sent, &vocab)
        });
    if cue {
        VerdictScore::new(0.05, 0.2 + 0.7 * s, 0.75 - 0.7 * s)
    } else {
        VerdictScore::new(0.9 * s, 0.05, 0.95 - 0.9 * s)
    }
}

/// Local linear explanation of a classifier's verdict on one claim.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub label: VerdictLabel,
    /// Surrogate coefficient per token; positive means keeping the token raises the label's probability.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

/// Fit the perturbation surrogate.
///
/// Samples `lime_samples` keep/drop vectors (the first keeps every token,
/// the rest keep each token with probability 0.5), queries the classifier on
/// every perturbed claim, weights sample z by exp(−d(z, 1)² / σ²) with d the
/// cosine distance to the all-ones vector, and fits a ridge regression of
/// the original label's probability on z with an unpenalized intercept.
pub fn explain(
    claim: &TokenSeq,
    evidence: &EvidenceSet,
    classifier: &dyn VerdictClassifier,
    cfg: &MaskerConfig,
) -> Result<Explanation, MaskError> {
    cfg.validate()?;
    let n = claim.len();
    let base = classifier
        .classify(&claim.tokens, evidence)
        .map_err(|source| MaskError::Classifier { sample: 0, source })?;
    let label = base.argmax();
    if n == 0 {
        return Ok(Explanation { label, coefficients: Vec::new(), intercept: base.prob(label) });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.lime_samples;
    let mut design = DMatrix::<f64>::zeros(m, n);
    let mut target = DVector::<f64>::zeros(m);
    let mut weight = DVector::<f64>::zeros(m);
    let sigma = cfg.kernel_width.unwrap_or(0.75 * (n as f64).sqrt());
    for s in 0..m {
        let keep: Vec<bool> = if s == 0 { vec![true; n] } else { (0..n).map(|_| rng.gen_bool(0.5)).collect() };
        let kept: Vec<String> = claim.tokens.iter().zip(&keep).filter(|(_, &k)| k).map(|(t, _)| t.clone()).collect();
        let score = if s == 0 {
            base
        } else {
            classifier
                .classify(&kept, evidence)
                .map_err(|source| MaskError::Classifier { sample: s, source })?
        };
        let ones = kept.len() as f64;
        let dist = if kept.is_empty() { 1.0 } else { 1.0 - (ones / n as f64).sqrt() };
        for (j, &k) in keep.iter().enumerate() {
            design[(s, j)] = if k { 1.0 } else { 0.0 };
        }
        target[s] = score.prob(label);
        weight[s] = (-(dist * dist) / (sigma * sigma)).exp();
    }

    let wsum = weight.sum();
    let x_mean: DVector<f64> = DVector::from_fn(n, |j, _| (0..m).map(|s| weight[s] * design[(s, j)]).sum::<f64>() / wsum);
    let y_mean = weight.dot(&target) / wsum;
    let mut xc = design;
    for s in 0..m {
        for j in 0..n {
            xc[(s, j)] -= x_mean[j];
        }
    }
    let yc = target.add_scalar(-y_mean);
    let w_xc = DMatrix::from_fn(m, n, |s, j| weight[s] * xc[(s, j)]);
    let mut gram = xc.transpose() * &w_xc;
    for j in 0..n {
        gram[(j, j)] += cfg.ridge;
    }
    let rhs = w_xc.transpose() * yc;
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(n)),
    };
    let intercept = y_mean - beta.dot(&x_mean);
    Ok(Explanation { label, coefficients: beta.iter().copied().collect(), intercept })
}

/// Mask the min(lime_features, n) tokens whose removal lowers the explained label's probability most.
///
/// Coefficients are compared on a 1e-9 grid and ties go to the leftmost
/// position, so a classifier that ignores the claim masks the leftmost tokens.
pub fn mask_perturbation(
    claim: &TokenSeq,
    evidence: &EvidenceSet,
    classifier: &dyn VerdictClassifier,
    cfg: &MaskerConfig,
) -> Result<MaskedClaim, MaskError> {
    let exp = explain(claim, evidence, classifier, cfg)?;
    let n = claim.len();
    let k = cfg.lime_features.min(n);
    let key = |c: f64| (c * 1e9).round() as i64;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key(exp.coefficients[b]).cmp(&key(exp.coefficients[a])).then(a.cmp(&b)));
    let mut mask = vec![false; n];
    for &i in &order[..k] {
        mask[i] = true;
    }
    Ok(MaskedClaim::new(claim.clone(), mask))
}

/// A configured masker. The LM and classifier are only needed by the strategies that use them.
pub struct Masker<'a> {
    pub config: MaskerConfig,
    pub lm: Option<&'a NGramLM>,
    pub classifier: Option<&'a dyn VerdictClassifier>,
}

impl<'a> Masker<'a> {
    pub fn new(config: MaskerConfig) -> Self {
        Masker { config, lm: None, classifier: None }
    }

    pub fn with_lm(mut self, lm: &'a NGramLM) -> Self {
        self.lm = Some(lm);
        self
    }

    pub fn with_classifier(mut self, classifier: &'a dyn VerdictClassifier) -> Self {
        self.classifier = Some(classifier);
        self
    }

    /// Mask one claim; `seed` is the per-record seed (see [`derive_seed`]).
    pub fn mask(&self, claim: &TokenSeq, evidence: &EvidenceSet, seed: u64) -> Result<MaskedClaim, MaskError> {
        self.config.validate()?;
        match self.config.strategy {
            MaskStrategy::Random => Ok(mask_random(claim, self.config.mask_ratio, seed)),
            MaskStrategy::Heuristic => Ok(mask_heuristic(claim, evidence)),
            MaskStrategy::Surprisal => {
                let lm = self.lm.ok_or(MaskError::MissingLm)?;
                Ok(mask_surprisal(claim, lm, self.config.mask_ratio))
            }
            MaskStrategy::Perturbation => {
                let cfg = MaskerConfig { seed, ..self.config };
                match self.classifier {
                    Some(c) => mask_perturbation(claim, evidence, c, &cfg),
                    None => mask_perturbation(claim, evidence, &LexicalVerdict, &cfg),
                }
            }
            MaskStrategy::WhiteBox => Err(MaskError::Unsupported(MaskStrategy::WhiteBox)),
        }
    }
}

/// One line of a masked-claims file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedRecord {
    pub id: u64,
    pub masked_claim: String,
    pub mask: Vec<u8>,
}

impl MaskedRecord {
    pub fn new(id: u64, masked: &MaskedClaim) -> Self {
        MaskedRecord { id, masked_claim: masked.render(), mask: masked.mask.iter().map(|&m| m as u8).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceMaskStats {
    pub mask_fraction: f64,
    pub longest_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDiagnostics {
    pub instances: Vec<InstanceMaskStats>,
    pub mean_mask_fraction: f64,
    /// Share of instances whose longest masked run exceeds 5 tokens.
    pub share_run_over_5: f64,
    /// Share of instances whose longest masked run is exactly 4 tokens.
    pub share_run_of_4: f64,
}

impl fmt::Display for MaskDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "instances={} mean_mask={:.3} run>5={:.0}% run==4={:.0}%",
            self.instances.len(),
            self.mean_mask_fraction,
            100.0 * self.share_run_over_5,
            100.0 * self.share_run_of_4
        )
    }
}

pub fn mask_diagnostics(masked: &[MaskedClaim]) -> MaskDiagnostics {
    let instances: Vec<InstanceMaskStats> = masked
        .iter()
        .map(|m| InstanceMaskStats {
            mask_fraction: if m.mask.is_empty() { 0.0 } else { m.masked_count() as f64 / m.mask.len() as f64 },
            longest_run: m.longest_run(),
        })
        .collect();
    let n = instances.len().max(1) as f64;
    let share = |pred: fn(usize) -> bool| instances.iter().filter(|i| pred(i.longest_run)).count() as f64 / n;
    MaskDiagnostics {
        mean_mask_fraction: instances.iter().map(|i| i.mask_fraction).sum::<f64>() / n,
        share_run_over_5: share(|r| r > 5),
        share_run_of_4: share(|r| r == 4),
        instances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Document;
    use crate::retrieval::index_documents;
    use crate::text::tokenize;
    use proptest::prelude::*;

    fn evidence(texts: &[&str]) -> EvidenceSet {
        let docs: Vec<Document> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document { page: format!("p{i}"), text: t.to_string() })
            .collect();
        let idx = index_documents(&docs, 50).unwrap();
        EvidenceSet::from_passages(idx.passages.iter().cloned().enumerate().map(|(i, p)| (i as u32, p)).collect())
    }

    fn mask_of(m: &MaskedClaim) -> Vec<u8> {
        m.mask.iter().map(|&b| b as u8).collect()
    }

    #[test]
    fn random_masks_ceil_half() {
        let claim = tokenize("a b c d e f g h");
        assert_eq!(mask_random(&claim, 0.5, 1).masked_count(), 4);
        assert_eq!(mask_random(&tokenize("a b c"), 0.5, 1).masked_count(), 2);
        assert_eq!(mask_random(&claim, 1.0, 1).masked_count(), 8);
        assert_eq!(mask_random(&tokenize("a b c d e f g h i j"), 0.3, 2).masked_count(), 3);
        assert_eq!(mask_random(&claim, 0.5, 13), mask_random(&claim, 0.5, 13));
    }

    #[test]
    fn heuristic_masks_missing_tokens() {
        let claim = tokenize("paris is the capital of germany");
        let ev = evidence(&["Paris is the capital of France."]);
        assert_eq!(mask_of(&mask_heuristic(&claim, &ev)), [0, 0, 0, 0, 0, 1]);
        let covered = tokenize("paris is the capital");
        assert_eq!(mask_heuristic(&covered, &ev).masked_count(), 0);
        assert_eq!(mask_heuristic(&claim, &EvidenceSet::empty(2)).masked_count(), 6);
    }

    #[test]
    fn render_substitutes_placeholder() {
        let m = MaskedClaim::new(tokenize("a b c"), vec![false, true, false]);
        assert_eq!(m.render(), "a [MASK] c");
    }

    #[test]
    fn runs_and_diagnostics() {
        let mk = |bits: &[u8]| {
            let toks: Vec<String> = (0..bits.len()).map(|i| format!("t{i}")).collect();
            MaskedClaim::new(TokenSeq::from_tokens(&toks), bits.iter().map(|&b| b == 1).collect())
        };
        assert_eq!(mk(&[1, 1, 1, 1, 1, 1, 0]).longest_run(), 6);
        let d = mask_diagnostics(&[mk(&[1, 1, 1, 1, 1, 1]), mk(&[0, 1, 1, 1, 1, 0]), mk(&[1, 1, 0, 1]), mk(&[1, 0, 0])]);
        assert_eq!(d.share_run_over_5, 0.25);
        assert_eq!(d.share_run_of_4, 0.25);
        let zero = mask_diagnostics(&[mk(&[0, 0]), mk(&[0])]);
        assert_eq!((zero.share_run_over_5, zero.share_run_of_4, zero.mean_mask_fraction), (0.0, 0.0, 0.0));
    }

    #[test]
    fn verdict_rules() {
        let ev = evidence(&["Kavor Delin was born in 1885 ."]);
        assert_eq!(lexical_verdict(&tokenize("kavor delin was born in 1885 .").tokens, &ev).argmax(), VerdictLabel::Supports);
        assert_eq!(lexical_verdict(&tokenize("quantum foam").tokens, &ev).argmax(), VerdictLabel::NotEnoughInfo);
        assert_eq!(lexical_verdict(&tokenize("kavor delin was born in 1887 .").tokens, &ev).argmax(), VerdictLabel::Refutes);
        assert_eq!(lexical_verdict(&tokenize("kavor delin was not born in 1885 .").tokens, &ev).argmax(), VerdictLabel::Refutes);
        let s = lexical_verdict(&tokenize("kavor delin").tokens, &ev);
        assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_classifier_falls_back_leftmost() {
        let constant = |_: &[String], _: &EvidenceSet| Ok(VerdictScore::new(0.2, 0.5, 0.3));
        let claim = tokenize("one two three four five six seven eight nine");
        let cfg = MaskerConfig::with_strategy(MaskStrategy::Perturbation);
        let exp = explain(&claim, &EvidenceSet::empty(2), &constant, &cfg).unwrap();
        assert!(exp.coefficients.iter().all(|c| c.abs() < 1e-12));
        let m = mask_perturbation(&claim, &EvidenceSet::empty(2), &constant, &cfg).unwrap();
        assert_eq!(m.masked_positions(), [0, 1, 2, 3, 4, 5]);
        let short = tokenize("a b");
        assert_eq!(mask_perturbation(&short, &EvidenceSet::empty(2), &constant, &cfg).unwrap().masked_count(), 2);
    }

    #[test]
    fn contradicted_token_is_masked() {
        let ev = evidence(&["Kavor Delin was born in 1885 . Kavor Delin works as a painter ."]);
        let claim = tokenize("kavor delin was born in 1887 .");
        let orig = lexical_verdict(&claim.tokens, &ev).argmax();
        assert_eq!(orig, VerdictLabel::Refutes);
        // exhaustive single drops: only removing 1887 changes the verdict
        let flips: Vec<usize> = (0..claim.len())
            .filter(|&i| {
                let mut t = claim.tokens.clone();
                t.remove(i);
                lexical_verdict(&t, &ev).argmax() != orig
            })
            .collect();
        assert_eq!(flips, [5]);
        let cfg = MaskerConfig { lime_features: 1, ..MaskerConfig::with_strategy(MaskStrategy::Perturbation) };
        let m = mask_perturbation(&claim, &ev, &LexicalVerdict, &cfg).unwrap();
        assert_eq!(m.masked_positions(), [5]);
        let m = mask_perturbation(&claim, &ev, &LexicalVerdict, &MaskerConfig::default()).unwrap();
        assert!(m.mask[5]);
        assert!(m.masked_count() <= 6);
    }

    #[test]
    fn classifier_error_names_sample() {
        let failing = |c: &[String], _: &EvidenceSet| {
            if c.len() < 3 {
                Err(ClassifierError("too short".into()))
            } else {
                Ok(VerdictScore::new(1.0, 0.0, 0.0))
            }
        };
        let err = mask_perturbation(&tokenize("a b c d e f"), &EvidenceSet::empty(2), &failing, &MaskerConfig::default()).unwrap_err();
        match err {
            MaskError::Classifier { sample, .. } => assert!(sample > 0),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(MaskerConfig { mask_ratio: 0.0, ..Default::default() }.validate().is_err());
        assert!(MaskerConfig { mask_ratio: 1.5, ..Default::default() }.validate().is_err());
        assert!(MaskerConfig { lime_samples: 9, ..Default::default() }.validate().is_err());
        assert!(MaskerConfig { lime_features: 0, ..Default::default() }.validate().is_err());
        let m = Masker::new(MaskerConfig::with_strategy(MaskStrategy::WhiteBox));
        assert!(matches!(m.mask(&tokenize("a"), &EvidenceSet::empty(2), 0), Err(MaskError::Unsupported(_))));
        let m = Masker::new(MaskerConfig::with_strategy(MaskStrategy::Surprisal));
        assert!(matches!(m.mask(&tokenize("a"), &EvidenceSet::empty(2), 0), Err(MaskError::MissingLm)));
    }

    #[test]
    fn perturbation_is_seed_deterministic() {
        let ev = evidence(&["the quick brown fox jumps over the lazy dog ."]);
        let claim = tokenize("the quick red fox jumps over a lazy cat .");
        let cfg = MaskerConfig { seed: 11, ..MaskerConfig::with_strategy(MaskStrategy::Perturbation) };
        let a = explain(&claim, &ev, &LexicalVerdict, &cfg).unwrap();
        let b = explain(&claim, &ev, &LexicalVerdict, &cfg).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn surprisal_mask_is_rank_based(
            corpus in proptest::collection::vec(proptest::collection::vec("[a-e]", 1..6), 1..5),
            claim in proptest::collection::vec("[a-g]", 1..9),
            ratio in 0.05f64..=1.0,
        ) {
            let lm = crate::lm::train_lm(&corpus, crate::lm::LmConfig::default()).unwrap();
            let seq = TokenSeq::from_tokens(&claim);
            let m = mask_surprisal(&seq, &lm, ratio);
            prop_assert_eq!(m.mask.len(), seq.len());
            prop_assert_eq!(m.masked_count(), masked_count(ratio, seq.len()));
            // exp is strictly monotone: ranking by exp(surprisal) must select the same set
            let s: Vec<f64> = lm.token_surprisals(&seq.tokens).iter().map(|v| v.exp()).collect();
            let mut order: Vec<usize> = (0..seq.len()).collect();
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
            let mut want = vec![false; seq.len()];
            for &i in &order[..m.masked_count()] { want[i] = true; }
            prop_assert_eq!(m.mask, want);
        }
    }
}
