//! Passage chunking, a BM25 inverted index and two-stage page→passage retrieval.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClaimRecord, Document};
use crate::text::{tokenize, tokenize_with_spans, TokenSeq};

pub const DEFAULT_WINDOW: usize = 50;
pub const DEFAULT_K: usize = 2;
pub const DEFAULT_PAGE_FANOUT: usize = 5;

const INDEX_HEADER: &str = "fec-index v1";

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("duplicate passage ({0}, {1})")]
    DuplicatePassage(String, u32),
    #[error("passages of page {0} are not contiguous")]
    Scattered(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("index format: {0}")]
    Format(String),
}

/// A fixed-window chunk of one corpus page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub page_id: String,
    pub passage_index: u32,
    pub tokens: TokenSeq,
    /// Byte range into the (NFC) page text.
    pub char_span: Range<usize>,
    /// Position of the first token within the page's token sequence.
    pub token_start: usize,
}

/// Split a document into consecutive non-overlapping passages of at most `window` tokens.
pub fn chunk(doc: &Document, window: usize) -> Result<Vec<Passage>, RetrievalError> {
    if window == 0 {
        return Err(RetrievalError::ZeroWindow);
    }
    let (normalized, toks) = tokenize_with_spans(&doc.text);
    Ok(toks
        .chunks(window)
        .enumerate()
        .map(|(i, piece)| {
            let span = piece[0].1.start..piece[piece.len() - 1].1.end;
            Passage {
                page_id: doc.page.clone(),
                passage_index: i as u32,
                tokens: TokenSeq {
                    tokens: piece.iter().map(|(t, _)| t.clone()).collect(),
                    original: normalized[span.clone()].to_string(),
                },
                char_span: span,
                token_start: i * window,
            }
        })
        .collect())
}

/// Token ranges of the sentences in a page, split after `.`, `!` and `?`.
pub fn sentence_ranges<S: AsRef<str>>(tokens: &[S]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if matches!(t.as_ref(), "." | "!" | "?") {
            out.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push(start..tokens.len());
    }
    out
}

/// Every corpus sentence as a token list, the usual LM training input.
pub fn corpus_sentences(docs: &[Document]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for d in docs {
        let toks = tokenize(&d.text).tokens;
        out.extend(sentence_ranges(&toks).into_iter().map(|r| toks[r].to_vec()));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Postings and length statistics over one collection of documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Bm25Table {
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
    pub doc_len: Vec<u32>,
    pub avgdl: f64,
}

impl Bm25Table {
    fn build<'a>(docs: impl Iterator<Item = &'a [String]>) -> Self {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_len = Vec::new();
        for (id, toks) in docs.enumerate() {
            doc_len.push(toks.len() as u32);
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in toks {
                *tf.entry(t.as_str()).or_insert(0) += 1;
            }
            for (t, c) in tf {
                postings.entry(t.to_string()).or_default().push((id as u32, c));
            }
        }
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avgdl = if doc_len.is_empty() { 0.0 } else { total as f64 / doc_len.len() as f64 };
        Bm25Table { postings, doc_len, avgdl }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_len.len()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Lucene-style idf, positive for every term that occurs.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores of every document matching at least one of `terms`.
    fn score_all(&self, terms: &BTreeSet<&str>, params: Bm25Params, keep: impl Fn(u32) -> bool) -> HashMap<u32, f64> {
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for &term in terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(doc, tf) in list {
                if !keep(doc) {
                    continue;
                }
                let tf = tf as f64;
                let dl = self.doc_len[doc as usize] as f64;
                let norm = params.k1 * (1.0 - params.b + params.b * dl / self.avgdl);
                *scores.entry(doc).or_insert(0.0) += idf * tf * (params.k1 + 1.0) / (tf + norm);
            }
        }
        scores
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageInfo {
    pub page_id: String,
    /// Passage ids of this page, in passage order.
    pub passages: Range<u32>,
    /// Sentence token ranges within the page.
    pub sentences: Vec<Range<usize>>,
}

/// BM25 index at passage granularity plus a page-level table for the first stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub passages: Vec<Passage>,
    pub passage_table: Bm25Table,
    pub pages: Vec<PageInfo>,
    pub page_table: Bm25Table,
    pub params: Bm25Params,
}

/// Build the index. Passages of one page must be contiguous and in passage order.
pub fn build_index(passages: Vec<Passage>) -> Result<InvertedIndex, RetrievalError> {
    build_index_with(passages, Bm25Params::default())
}

pub fn build_index_with(passages: Vec<Passage>, params: Bm25Params) -> Result<InvertedIndex, RetrievalError> {
    let mut seen = HashSet::new();
    for p in &passages {
        if !seen.insert((p.page_id.as_str(), p.passage_index)) {
            return Err(RetrievalError::DuplicatePassage(p.page_id.clone(), p.passage_index));
        }
    }
    let mut pages: Vec<PageInfo> = Vec::new();
    let mut page_tokens: Vec<Vec<String>> = Vec::new();
    let mut closed = HashSet::new();
    for (id, p) in passages.iter().enumerate() {
        let id = id as u32;
        match pages.last_mut() {
            Some(last) if last.page_id == p.page_id => {
                last.passages.end = id + 1;
                page_tokens.last_mut().unwrap().extend(p.tokens.tokens.iter().cloned());
            }
            _ => {
                if let Some(last) = pages.last() {
                    closed.insert(last.page_id.clone());
                }
                if closed.contains(&p.page_id) {
                    return Err(RetrievalError::Scattered(p.page_id.clone()));
                }
                pages.push(PageInfo { page_id: p.page_id.clone(), passages: id..id + 1, sentences: Vec::new() });
                page_tokens.push(p.tokens.tokens.clone());
            }
        }
    }
    for (info, toks) in pages.iter_mut().zip(&page_tokens) {
        info.sentences = sentence_ranges(toks);
    }
    let passage_table = Bm25Table::build(passages.iter().map(|p| p.tokens.tokens.as_slice()));
    let page_table = Bm25Table::build(page_tokens.iter().map(Vec::as_slice));
    Ok(InvertedIndex { passages, passage_table, pages, page_table, params })
}

/// Chunk every document and index the result.
pub fn index_documents(docs: &[Document], window: usize) -> Result<InvertedIndex, RetrievalError> {
    let mut passages = Vec::new();
    for d in docs {
        passages.extend(chunk(d, window)?);
    }
    build_index(passages)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieveParams {
    pub k: usize,
    /// Pages kept by the first stage.
    pub page_fanout: usize,
}

impl Default for RetrieveParams {
    fn default() -> Self {
        RetrieveParams { k: DEFAULT_K, page_fanout: DEFAULT_PAGE_FANOUT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage_id: u32,
    pub passage: Passage,
    pub score: f64,
}

/// Retrieved evidence for one claim, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvidenceSet {
    pub items: Vec<ScoredPassage>,
    pub k: usize,
}

impl EvidenceSet {
    pub fn empty(k: usize) -> Self {
        EvidenceSet { items: Vec::new(), k }
    }

    pub fn from_passages(passages: Vec<(u32, Passage)>) -> Self {
        let k = passages.len();
        EvidenceSet {
            items: passages
                .into_iter()
                .map(|(passage_id, passage)| ScoredPassage { passage_id, passage, score: 1.0 })
                .collect(),
            k,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn texts(&self) -> Vec<String> {
        self.items.iter().map(|i| i.passage.tokens.original.clone()).collect()
    }

    pub fn token_set(&self) -> HashSet<&str> {
        self.items
            .iter()
            .flat_map(|i| i.passage.tokens.tokens.iter().map(String::as_str))
            .collect()
    }

    pub fn pages(&self) -> BTreeSet<&str> {
        self.items.iter().map(|i| i.passage.page_id.as_str()).collect()
    }
}

fn rank_key(score: f64, page: &str, idx: u32) -> (std::cmp::Reverse<OrdF64>, &str, u32) {
    (std::cmp::Reverse(OrdF64(score)), page, idx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl InvertedIndex {
    pub fn passage_count(&self) -> usize {
        self.passages.len()
    }

    pub fn page(&self, page_id: &str) -> Option<&PageInfo> {
        self.pages.iter().find(|p| p.page_id == page_id)
    }

    /// First stage: BM25 over whole pages, best `fanout` with positive score.
    pub fn rank_pages(&self, claim: &TokenSeq, fanout: usize) -> Vec<(usize, f64)> {
        let terms: BTreeSet<&str> = claim.tokens.iter().map(String::as_str).collect();
        let mut scored: Vec<(usize, f64)> = self
            .page_table
            .score_all(&terms, self.params, |_| true)
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(p, s)| (p as usize, s))
            .collect();
        scored.sort_by(|a, b| rank_key(a.1, &self.pages[a.0].page_id, 0).cmp(&rank_key(b.1, &self.pages[b.0].page_id, 0)));
        scored.truncate(fanout);
        scored
    }

    /// BM25 score of every passage (zero for passages sharing no term with the claim).
    pub fn passage_scores(&self, claim: &TokenSeq) -> Vec<f64> {
        let terms: BTreeSet<&str> = claim.tokens.iter().map(String::as_str).collect();
        let mut out = vec![0.0; self.passages.len()];
        for (id, s) in self.passage_table.score_all(&terms, self.params, |_| true) {
            out[id as usize] = s;
        }
        out
    }

    /// Two-stage retrieval: keep the best pages, then rank their passages.
    pub fn retrieve(&self, claim: &TokenSeq, params: RetrieveParams) -> Result<EvidenceSet, RetrievalError> {
        if params.k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        if claim.is_empty() || self.passages.is_empty() {
            return Ok(EvidenceSet::empty(params.k));
        }
        let kept = self.rank_pages(claim, params.page_fanout.max(1));
        let allowed: HashSet<u32> = kept
            .iter()
            .flat_map(|&(p, _)| self.pages[p].passages.clone())
            .collect();
        let terms: BTreeSet<&str> = claim.tokens.iter().map(String::as_str).collect();
        let mut scored: Vec<(u32, f64)> = self
            .passage_table
            .score_all(&terms, self.params, |d| allowed.contains(&d))
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .collect();
        scored.sort_by(|a, b| {
            let pa = &self.passages[a.0 as usize];
            let pb = &self.passages[b.0 as usize];
            rank_key(a.1, &pa.page_id, pa.passage_index).cmp(&rank_key(b.1, &pb.page_id, pb.passage_index))
        });
        scored.truncate(params.k);
        Ok(EvidenceSet {
            items: scored
                .into_iter()
                .map(|(id, score)| ScoredPassage { passage_id: id, passage: self.passages[id as usize].clone(), score })
                .collect(),
            k: params.k,
        })
    }

    /// Passages overlapping the referenced sentences, in index order.
    pub fn gold_passages(&self, record: &ClaimRecord) -> Vec<u32> {
        let mut out = BTreeSet::new();
        for r in &record.evidence_refs {
            let Some(info) = self.page(r.page()) else { continue };
            let Some(sent) = info.sentences.get(r.sentence() as usize) else { continue };
            for id in info.passages.clone() {
                let p = &self.passages[id as usize];
                let span = p.token_start..p.token_start + p.tokens.len();
                if span.start < sent.end && sent.start < span.end {
                    out.insert(id);
                }
            }
        }
        out.into_iter().collect()
    }

    /// Gold-evidence passages as an evidence set.
    pub fn gold_evidence(&self, record: &ClaimRecord) -> EvidenceSet {
        EvidenceSet::from_passages(
            self.gold_passages(record)
                .into_iter()
                .map(|id| (id, self.passages[id as usize].clone()))
                .collect(),
        )
    }

    /// Rebuild from the stored passages and compare every table.
    pub fn verify(&self) -> bool {
        match build_index_with(self.passages.clone(), self.params) {
            Ok(fresh) => &fresh == self,
            Err(_) => false,
        }
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), RetrievalError> {
        writeln!(w, "{INDEX_HEADER}")?;
        serde_json::to_writer(&mut w, self).map_err(|e| RetrievalError::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn load<R: BufRead>(mut r: R) -> Result<Self, RetrievalError> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        if header.trim_end() != INDEX_HEADER {
            return Err(RetrievalError::Format(format!("unsupported header {:?}", header.trim_end())));
        }
        serde_json::from_reader(r).map_err(|e| RetrievalError::Format(e.to_string()))
    }
}

/// Where a record's evidence comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceMode {
    /// Two-stage BM25 retrieval on the claim.
    Retrieved,
    /// Passages overlapping the record's evidence pointers.
    Gold,
}

impl std::fmt::Display for EvidenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvidenceMode::Retrieved => "retrieved",
            EvidenceMode::Gold => "gold",
        })
    }
}

impl std::str::FromStr for EvidenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "retrieved" => Ok(EvidenceMode::Retrieved),
            "gold" => Ok(EvidenceMode::Gold),
            other => Err(format!("unknown evidence mode {other:?}")),
        }
    }
}

/// Evidence lookup for dataset records.
#[derive(Debug, Clone, Copy)]
pub struct Retriever<'a> {
    pub index: &'a InvertedIndex,
    pub params: RetrieveParams,
    pub mode: EvidenceMode,
}

impl<'a> Retriever<'a> {
    pub fn new(index: &'a InvertedIndex, params: RetrieveParams, mode: EvidenceMode) -> Self {
        Retriever { index, params, mode }
    }

    pub fn evidence_for(&self, record: &ClaimRecord) -> Result<EvidenceSet, RetrievalError> {
        match self.mode {
            EvidenceMode::Retrieved => self.index.retrieve(&crate::text::tokenize(&record.claim), self.params),
            EvidenceMode::Gold => Ok(self.index.gold_evidence(record)),
        }
    }
}

/// Fraction of records with at least one gold page among the retrieved passages' pages.
pub fn recall_at_k(records: &[ClaimRecord], index: &InvertedIndex, k: usize) -> Result<f64, RetrievalError> {
    hit_rate(records, |r| {
        let ev = index.retrieve(&crate::text::tokenize(&r.claim), RetrieveParams { k, ..Default::default() })?;
        let pages = ev.pages();
        Ok(r.evidence_refs.iter().any(|e| pages.contains(e.page())))
    })
}

/// Fraction of records for which a passage overlapping a gold sentence is retrieved.
pub fn gold_passage_recall(records: &[ClaimRecord], index: &InvertedIndex, k: usize) -> Result<f64, RetrievalError> {
    hit_rate(records, |r| {
        let ev = index.retrieve(&crate::text::tokenize(&r.claim), RetrieveParams { k, ..Default::default() })?;
        let gold = index.gold_passages(r);
        Ok(ev.items.iter().any(|i| gold.contains(&i.passage_id)))
    })
}

fn hit_rate(
    records: &[ClaimRecord],
    mut hit: impl FnMut(&ClaimRecord) -> Result<bool, RetrievalError>,
) -> Result<f64, RetrievalError> {
    let with_refs: Vec<&ClaimRecord> = records.iter().filter(|r| !r.evidence_refs.is_empty()).collect();
    if with_refs.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for r in &with_refs {
        if hit(r)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / with_refs.len() as f64)
}
