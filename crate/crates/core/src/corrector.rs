//! Correctors rewrite a masked claim conditioned on evidence.
//!
//! Built in: a copy baseline, an evidence-span fill corrector that only
//! ever inserts spans found verbatim in the evidence, and an LM-only fill
//! baseline. External seq2seq correctors are reached through a
//! newline-delimited JSON protocol ([`ExternalCorrector`]).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::ClaimRecord;
use crate::lm::NGramLM;
use crate::maskers::{derive_seed, MaskError, MaskedClaim, Masker};
use crate::retrieval::{EvidenceSet, RetrievalError, Retriever};
use crate::text::{is_content_token, tokenize, VerdictLabel};

/// Where a filled span came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum FillSource {
    Evidence { passage_id: u32, page_id: String, offset: usize, len: usize },
    /// The masked run was deleted.
    Empty,
    Lm { token: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub id: u64,
    pub correction: String,
    pub provenance: String,
    /// One entry per maximal masked run (built-in correctors only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fills: Vec<FillSource>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorrectError {
    #[error("mask: {0}")]
    Mask(#[from] MaskError),
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("external corrector: {0}")]
    External(#[from] ExternalError),
}

pub trait Corrector {
    fn name(&self) -> &str;

    fn correct(&self, id: u64, masked: &MaskedClaim, evidence: &EvidenceSet) -> Result<CorrectionResult, CorrectError>;
}

/// Returns the input claim unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopyCorrector;

impl Corrector for CopyCorrector {
    fn name(&self) -> &str {
        "copy"
    }

    fn correct(&self, id: u64, masked: &MaskedClaim, _: &EvidenceSet) -> Result<CorrectionResult, CorrectError> {
        Ok(CorrectionResult { id, correction: masked.tokens.original.clone(), provenance: "copy".into(), fills: Vec::new() })
    }
}

fn identity(id: u64, masked: &MaskedClaim, provenance: &str) -> Option<CorrectionResult> {
    (masked.masked_count() == 0).then(|| CorrectionResult {
        id,
        correction: masked.tokens.original.clone(),
        provenance: provenance.into(),
        fills: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceFillParams {
    pub beam: usize,
    pub max_span: usize,
    /// Weight of LM fluency against evidence support.
    pub lambda: f64,
}

impl Default for EvidenceFillParams {
    fn default() -> Self {
        EvidenceFillParams { beam: 8, max_span: 6, lambda: 0.5 }
    }
}

/// A candidate fill: a contiguous evidence span, or the empty span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanCandidate {
    pub tokens: Vec<String>,
    pub source: FillSource,
}

/// Every distinct span of 0..=max_span tokens from the evidence, in
/// (passage id, offset, length) order with the empty span first. Token-identical
/// spans keep their first occurrence.
pub fn span_candidates(evidence: &EvidenceSet, max_span: usize) -> Vec<SpanCandidate> {
    let mut items: Vec<_> = evidence.items.iter().collect();
    items.sort_by_key(|i| i.passage_id);
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut out = vec![SpanCandidate { tokens: Vec::new(), source: FillSource::Empty }];
    seen.insert(Vec::new());
    for item in items {
        let toks = &item.passage.tokens.tokens;
        for offset in 0..toks.len() {
            for len in 1..=max_span.min(toks.len() - offset) {
                let span = toks[offset..offset + len].to_vec();
                if seen.insert(span.clone()) {
                    out.push(SpanCandidate {
                        tokens: span,
                        source: FillSource::Evidence {
                            passage_id: item.passage_id,
                            page_id: item.passage.page_id.clone(),
                            offset,
                            len,
                        },
                    });
                }
            }
        }
    }
    out
}

/// Geometric-mean token probability, with `</s>` included when `complete`.
pub fn fluency(lm: &NGramLM, tokens: &[String], complete: bool) -> f64 {
    if complete {
        (lm.score_sentence(tokens) / (tokens.len() + 1) as f64).exp()
    } else if tokens.is_empty() {
        1.0
    } else {
        (lm.score_sequence(tokens) / tokens.len() as f64).exp()
    }
}

/// Fraction of content tokens that occur in the evidence (0 without content tokens).
pub fn evidence_support(tokens: &[String], evidence_vocab: &HashSet<&str>) -> f64 {
    let content: Vec<&String> = tokens.iter().filter(|t| is_content_token(t)).collect();
    if content.is_empty() {
        return 0.0;
    }
    content.iter().filter(|t| evidence_vocab.contains(t.as_str())).count() as f64 / content.len() as f64
}

/// Score of a (possibly partial) completion.
pub fn completion_score(lm: &NGramLM, tokens: &[String], complete: bool, evidence_vocab: &HashSet<&str>, lambda: f64) -> f64 {
    lambda * fluency(lm, tokens, complete) + (1.0 - lambda) * evidence_support(tokens, evidence_vocab)
}

/// Fills masked runs with evidence spans chosen by left-to-right beam search.
pub struct EvidenceFillCorrector<'a> {
    pub lm: &'a NGramLM,
    pub params: EvidenceFillParams,
}

#[derive(Clone)]
struct Hyp {
    fills: Vec<usize>,
    tokens: Vec<String>,
    log_prob: f64,
    scored: usize,
    content: usize,
    covered: usize,
}

struct Extension {
    parent: usize,
    cand: usize,
    log_prob: f64,
    scored: usize,
    content: usize,
    covered: usize,
    score: f64,
}

impl<'a> EvidenceFillCorrector<'a> {
    pub fn new(lm: &'a NGramLM, params: EvidenceFillParams) -> Self {
        EvidenceFillCorrector { lm, params }
    }

    // Scores are accumulated left to right, exactly as `completion_score` sums
    // over the assembled tokens, so the beam sees identical values.
    fn extend(&self, h: &Hyp, parent: usize, cand: usize, cont: &[&String], complete: bool, vocab: &HashSet<&str>) -> Extension {
        let mut log_prob = h.log_prob;
        for lp in self.lm.continuation_log_probs(&h.tokens, cont, complete) {
            log_prob += lp;
        }
        let scored = h.scored + cont.len() + usize::from(complete);
        let (mut content, mut covered) = (h.content, h.covered);
        for t in cont.iter().filter(|t| is_content_token(t)) {
            content += 1;
            covered += usize::from(vocab.contains(t.as_str()));
        }
        let fluency = if scored == 0 { 1.0 } else { (log_prob / scored as f64).exp() };
        let support = if content == 0 { 0.0 } else { covered as f64 / content as f64 };
        let lambda = self.params.lambda;
        Extension { parent, cand, log_prob, scored, content, covered, score: lambda * fluency + (1.0 - lambda) * support }
    }
}

impl Corrector for EvidenceFillCorrector<'_> {
    fn name(&self) -> &str {
        "evidence-fill"
    }

    fn correct(&self, id: u64, masked: &MaskedClaim, evidence: &EvidenceSet) -> Result<CorrectionResult, CorrectError> {
        if let Some(r) = identity(id, masked, self.name()) {
            return Ok(r);
        }
        let cands = span_candidates(evidence, self.params.max_span);
        let vocab = evidence.token_set();
        let toks = &masked.tokens.tokens;
        let runs = masked.runs();
        let beam = self.params.beam.max(1);

        let root = Hyp { fills: Vec::new(), tokens: Vec::new(), log_prob: 0.0, scored: 0, content: 0, covered: 0 };
        let head: Vec<&String> = toks[..runs[0].start].iter().collect();
        let e = self.extend(&root, 0, 0, &head, false, &vocab);
        let mut hyps = vec![Hyp { tokens: toks[..runs[0].start].to_vec(), log_prob: e.log_prob, scored: e.scored, content: e.content, covered: e.covered, ..root }];

        for (j, run) in runs.iter().enumerate() {
            let complete = j + 1 == runs.len();
            let stop = runs.get(j + 1).map_or(toks.len(), |r| r.start);
            let tail = &toks[run.end..stop];
            let mut next: Vec<Extension> = Vec::with_capacity(hyps.len() * cands.len());
            for (p, h) in hyps.iter().enumerate() {
                for (c, cand) in cands.iter().enumerate() {
                    let cont: Vec<&String> = cand.tokens.iter().chain(tail).collect();
                    next.push(self.extend(h, p, c, &cont, complete, &vocab));
                }
            }
            // candidate indices follow the (passage, offset, length) order, so comparing
            // fill vectors lexicographically is the documented tie-break
            next.sort_by(|a, b| {
                b.score.total_cmp(&a.score).then_with(|| {
                    let fa = hyps[a.parent].fills.iter().chain(std::iter::once(&a.cand));
                    fa.cmp(hyps[b.parent].fills.iter().chain(std::iter::once(&b.cand)))
                })
            });
            next.truncate(beam);
            hyps = next
                .into_iter()
                .map(|e| {
                    let parent = &hyps[e.parent];
                    let mut fills = parent.fills.clone();
                    fills.push(e.cand);
                    let mut tokens = parent.tokens.clone();
                    tokens.extend(cands[e.cand].tokens.iter().chain(tail).cloned());
                    Hyp { fills, tokens, log_prob: e.log_prob, scored: e.scored, content: e.content, covered: e.covered }
                })
                .collect();
        }
        let best = &hyps[0];
        if best.tokens.is_empty() {
            // everything was masked and deleted; an empty correction is never emitted
            return Ok(CorrectionResult {
                id,
                correction: masked.tokens.original.clone(),
                provenance: format!("{}:fallback-copy", self.name()),
                fills: vec![FillSource::Empty; runs.len()],
            });
        }
        Ok(CorrectionResult {
            id,
            correction: best.tokens.join(" "),
            provenance: self.name().into(),
            fills: best.fills.iter().map(|&c| cands[c].source.clone()).collect(),
        })
    }
}

/// Replaces each mask with the LM's most likely next token given everything to its left.
pub struct LmFillCorrector<'a> {
    pub lm: &'a NGramLM,
}

impl Corrector for LmFillCorrector<'_> {
    fn name(&self) -> &str {
        "lm-fill"
    }

    fn correct(&self, id: u64, masked: &MaskedClaim, _: &EvidenceSet) -> Result<CorrectionResult, CorrectError> {
        if let Some(r) = identity(id, masked, self.name()) {
            return Ok(r);
        }
        let mut out: Vec<String> = Vec::with_capacity(masked.tokens.len());
        let mut fills = Vec::new();
        for (tok, &m) in masked.tokens.tokens.iter().zip(&masked.mask) {
            if !m {
                out.push(tok.clone());
                continue;
            }
            match self.lm.predict_next(&out) {
                Some(w) => {
                    fills.push(FillSource::Lm { token: w.clone() });
                    out.push(w);
                }
                None => fills.push(FillSource::Empty),
            }
        }
        let correction = if out.is_empty() { masked.tokens.original.clone() } else { out.join(" ") };
        Ok(CorrectionResult { id, correction, provenance: self.name().into(), fills })
    }
}

/// One distant-supervision example: reconstruct the claim from its masked form and evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub id: u64,
    pub masked_claim: String,
    pub evidence: Vec<String>,
    pub target: String,
}

/// Which labels produce training pairs. NOT_ENOUGH_INFO never does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelFilter {
    #[default]
    SupportsOnly,
    SupportsAndRefutes,
}

impl LabelFilter {
    pub fn admits(self, label: VerdictLabel) -> bool {
        match self {
            LabelFilter::SupportsOnly => label == VerdictLabel::Supports,
            LabelFilter::SupportsAndRefutes => label != VerdictLabel::NotEnoughInfo,
        }
    }
}

/// A training pair with the masked claim and evidence it was rendered from.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub pair: TrainingPair,
    pub masked: MaskedClaim,
    pub evidence: EvidenceSet,
}

/// Lazily generated training examples, keeping count of skipped records.
pub struct TrainingPairs<'r, 'm> {
    records: std::slice::Iter<'r, ClaimRecord>,
    masker: &'m Masker<'m>,
    retriever: Retriever<'m>,
    filter: LabelFilter,
    seed: u64,
    pub skipped_nei: usize,
    pub skipped_label: usize,
}

/// Stream one pair per admitted record; targets are the unmodified claims.
pub fn gen_training_pairs<'r, 'm>(
    records: &'r [ClaimRecord],
    masker: &'m Masker<'m>,
    retriever: Retriever<'m>,
    filter: LabelFilter,
    seed: u64,
) -> TrainingPairs<'r, 'm> {
    TrainingPairs { records: records.iter(), masker, retriever, filter, seed, skipped_nei: 0, skipped_label: 0 }
}

/// Masked claim and evidence for one record, the shared pre-correction step.
pub fn prepare(
    record: &ClaimRecord,
    masker: &Masker<'_>,
    retriever: &Retriever<'_>,
    seed: u64,
) -> Result<(MaskedClaim, EvidenceSet), CorrectError> {
    let evidence = retriever.evidence_for(record)?;
    let claim = tokenize(&record.claim);
    let masked = masker.mask(&claim, &evidence, derive_seed(seed, record.id))?;
    Ok((masked, evidence))
}

impl Iterator for TrainingPairs<'_, '_> {
    type Item = Result<TrainingExample, CorrectError>;

    fn next(&mut self) -> Option<Self::Item> {
        for record in self.records.by_ref() {
            if record.label == VerdictLabel::NotEnoughInfo {
                self.skipped_nei += 1;
                log::warn!("record {} is NOT_ENOUGH_INFO; no training pair", record.id);
                continue;
            }
            if !self.filter.admits(record.label) {
                self.skipped_label += 1;
                continue;
            }
            return Some(prepare(record, self.masker, &self.retriever, self.seed).map(|(masked, evidence)| TrainingExample {
                pair: TrainingPair { id: record.id, masked_claim: masked.render(), evidence: evidence.texts(), target: record.claim.clone() },
                masked,
                evidence,
            }));
        }
        None
    }
}

/// Request line of the external corrector protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: u64,
    pub masked_claim: String,
    pub evidence: Vec<String>,
}

/// Response line of the external corrector protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: u64,
    pub correction: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ExternalError {
    #[error("cannot reach corrector at {endpoint}: {source}")]
    Connect { endpoint: String, source: std::io::Error },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ItemError {
    #[error("item {0} timed out")]
    Timeout(u64),
    #[error("malformed response for item {id}: {message}")]
    Protocol { id: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `host:port`.
    Tcp(String),
    /// Program and arguments; requests go to its stdin, responses come from its stdout.
    Command(Vec<String>),
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    /// `tcp://host:port` or `cmd:program arg...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            Ok(Endpoint::Tcp(addr.to_string()))
        } else if let Some(cmd) = s.strip_prefix("cmd:") {
            let parts: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if parts.is_empty() {
                return Err("empty command".into());
            }
            Ok(Endpoint::Command(parts))
        } else {
            Err(format!("endpoint must start with tcp:// or cmd:, got {s:?}"))
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Tcp(a) => write!(f, "tcp://{a}"),
            Endpoint::Command(c) => write!(f, "cmd:{}", c.join(" ")),
        }
    }
}

/// Client for correctors served over the line protocol.
#[derive(Debug, Clone)]
pub struct ExternalCorrector {
    pub endpoint: Endpoint,
    pub timeout: Duration,
}

pub type ItemResult = Result<CorrectionResult, ItemError>;

impl ExternalCorrector {
    pub fn new(endpoint: Endpoint) -> Self {
        ExternalCorrector { endpoint, timeout: Duration::from_secs(30) }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Send a batch; results come back in request order, matched by id.
    pub fn correct_batch(&self, batch: &[(u64, MaskedClaim, EvidenceSet)]) -> Result<Vec<ItemResult>, ExternalError> {
        let requests: Vec<WireRequest> = batch
            .iter()
            .map(|(id, m, e)| WireRequest { id: *id, masked_claim: m.render(), evidence: e.texts() })
            .collect();
        let provenance = format!("external:{}", self.endpoint);
        match &self.endpoint {
            Endpoint::Tcp(addr) => {
                let connect_err = |source| ExternalError::Connect { endpoint: self.endpoint.to_string(), source };
                let sock = addr
                    .to_socket_addrs()
                    .map_err(connect_err)?
                    .next()
                    .ok_or_else(|| connect_err(std::io::Error::new(std::io::ErrorKind::NotFound, "no address")))?;
                let stream = TcpStream::connect_timeout(&sock, self.timeout.min(Duration::from_secs(5))).map_err(connect_err)?;
                let reader = stream.try_clone()?;
                let out = exchange(reader, &stream, &requests, self.timeout, &provenance);
                let _ = stream.shutdown(Shutdown::Both);
                out
            }
            Endpoint::Command(cmd) => {
                let mut child: Child = Command::new(&cmd[0])
                    .args(&cmd[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|source| ExternalError::Connect { endpoint: self.endpoint.to_string(), source })?;
                let stdout = child.stdout.take().expect("piped stdout");
                let stdin = child.stdin.take().expect("piped stdin");
                let out = exchange(stdout, stdin, &requests, self.timeout, &provenance);
                let _ = child.kill();
                let _ = child.wait();
                out
            }
        }
    }
}

/// Write every request, then collect responses until all ids are answered or the deadline passes.
pub fn exchange<R: Read + Send + 'static, W: Write>(
    reader: R,
    mut writer: W,
    requests: &[WireRequest],
    timeout: Duration,
    provenance: &str,
) -> Result<Vec<ItemResult>, ExternalError> {
    for r in requests {
        let line = serde_json::to_string(r).map_err(|e| ExternalError::Protocol(e.to_string()))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    let deadline = Instant::now() + timeout;

    let (tx, rx) = mpsc::channel::<std::io::Result<String>>();
    std::thread::spawn(move || {
        for line in BufReader::new(reader).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });

    let pending: BTreeSet<u64> = requests.iter().map(|r| r.id).collect();
    let mut answered: HashMap<u64, ItemResult> = HashMap::new();
    while answered.len() < pending.len() {
        let now = Instant::now();
        if now >= deadline {
            break;
        }
        let line = match rx.recv_timeout(deadline - now) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(e.into()),
            Err(_) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| ExternalError::Protocol(format!("unparseable line {line:?}: {e}")))?;
        let Some(id) = value.get("id").and_then(serde_json::Value::as_u64) else {
            return Err(ExternalError::Protocol(format!("response without id: {line}")));
        };
        if !pending.contains(&id) {
            log::warn!("ignoring response for unknown id {id}");
            continue;
        }
        if answered.contains_key(&id) {
            continue;
        }
        let item = match serde_json::from_value::<WireResponse>(value) {
            Ok(resp) => Ok(CorrectionResult { id, correction: resp.correction, provenance: provenance.to_string(), fills: Vec::new() }),
            Err(e) => Err(ItemError::Protocol { id, message: e.to_string() }),
        };
        answered.insert(id, item);
    }
    Ok(requests
        .iter()
        .map(|r| answered.remove(&r.id).unwrap_or(Err(ItemError::Timeout(r.id))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Document;
    use crate::lm::{train_lm, LmConfig};
    use crate::retrieval::index_documents;

    fn evidence(texts: &[&str]) -> EvidenceSet {
        let docs: Vec<Document> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document { page: format!("p{i}"), text: t.to_string() })
            .collect();
        let idx = index_documents(&docs, 50).unwrap();
        EvidenceSet::from_passages(idx.passages.iter().cloned().enumerate().map(|(i, p)| (i as u32, p)).collect())
    }

    fn lm(lines: &[&str]) -> NGramLM {
        let corpus: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l).tokens).collect();
        train_lm(&corpus, LmConfig::default()).unwrap()
    }

    fn masked(text: &str, positions: &[usize]) -> MaskedClaim {
        let toks = tokenize(text);
        let n = toks.len();
        MaskedClaim::new(toks, (0..n).map(|i| positions.contains(&i)).collect())
    }

    #[test]
    fn identity_on_unmasked_input() {
        let model = lm(&["a b c"]);
        let m = MaskedClaim::unmasked(tokenize("Some  Claim, verbatim."));
        let ev = evidence(&["other text"]);
        for c in [&EvidenceFillCorrector::new(&model, Default::default()) as &dyn Corrector, &LmFillCorrector { lm: &model }, &CopyCorrector] {
            assert_eq!(c.correct(1, &m, &ev).unwrap().correction, "Some  Claim, verbatim.");
        }
    }

    #[test]
    fn fills_capital_from_evidence() {
        let model = lm(&["paris is the capital of france", "berlin is the capital of germany", "rome is the capital of italy"]);
        let ev = evidence(&["paris is the capital of france"]);
        let m = masked("paris is the capital of germany", &[5]);
        let r = EvidenceFillCorrector::new(&model, Default::default()).correct(7, &m, &ev).unwrap();
        assert_eq!(r.correction, "paris is the capital of france");
        assert!(matches!(&r.fills[0], FillSource::Evidence { len: 1, .. }));
    }

    #[test]
    fn empty_evidence_deletes_masks() {
        let model = lm(&["a b c"]);
        let m = masked("a b zzz c", &[2]);
        let r = EvidenceFillCorrector::new(&model, Default::default()).correct(1, &m, &EvidenceSet::empty(2)).unwrap();
        assert_eq!(r.correction, "a b c");
        assert_eq!(r.fills, [FillSource::Empty]);
    }

    #[test]
    fn fully_masked_with_no_evidence_falls_back() {
        let model = lm(&["a b c"]);
        let m = masked("x y", &[0, 1]);
        let r = EvidenceFillCorrector::new(&model, Default::default()).correct(1, &m, &EvidenceSet::empty(2)).unwrap();
        assert_eq!(r.correction, "x y");
    }

    #[test]
    fn candidate_spans_are_deduplicated() {
        let ev = evidence(&["a b a b"]);
        let c = span_candidates(&ev, 2);
        let spans: Vec<String> = c.iter().map(|s| s.tokens.join(" ")).collect();
        assert_eq!(spans, ["", "a", "a b", "b", "b a"]);
    }

    #[test]
    fn lm_fill_follows_argmax_chain() {
        let model = train_lm(&[tokenize("x y z w").tokens], LmConfig { order: 2, alpha: 1e-6, min_count: 1 }).unwrap();
        let m = masked("x y q q", &[2, 3]);
        let r = LmFillCorrector { lm: &model }.correct(1, &m, &EvidenceSet::empty(2)).unwrap();
        assert_eq!(r.correction, "x y z w");
    }

    #[test]
    fn label_filter() {
        assert!(LabelFilter::SupportsOnly.admits(VerdictLabel::Supports));
        assert!(!LabelFilter::SupportsOnly.admits(VerdictLabel::Refutes));
        assert!(LabelFilter::SupportsAndRefutes.admits(VerdictLabel::Refutes));
        assert!(!LabelFilter::SupportsAndRefutes.admits(VerdictLabel::NotEnoughInfo));
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!("tcp://127.0.0.1:9".parse::<Endpoint>(), Ok(Endpoint::Tcp("127.0.0.1:9".into())));
        assert_eq!("cmd:cat -u".parse::<Endpoint>(), Ok(Endpoint::Command(vec!["cat".into(), "-u".into()])));
        assert!("http://x".parse::<Endpoint>().is_err());
    }

    #[test]
    fn exchange_over_in_memory_pipe() {
        let reqs = vec![WireRequest { id: 3, masked_claim: "a [MASK]".into(), evidence: vec![] }];
        let reply = std::io::Cursor::new(b"{\"id\":3,\"correction\":\"a b\"}\n".to_vec());
        let mut sent = Vec::new();
        let out = exchange(reply, &mut sent, &reqs, Duration::from_secs(1), "t").unwrap();
        assert_eq!(out[0].as_ref().unwrap().correction, "a b");
        let line: WireRequest = serde_json::from_slice(sent.strip_suffix(b"\n").unwrap()).unwrap();
        assert_eq!(line, reqs[0]);
    }
}
