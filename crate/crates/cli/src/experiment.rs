//! The full pipeline: load, index, train the LM, (tune), mask, correct, score.
//!
//! Every stage writes plain files into the output directory. Nothing written
//! depends on wall-clock time, so identical configs give identical bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use fec_core::corrector::{
    gen_training_pairs, prepare, CopyCorrector, CorrectionResult, Corrector, EvidenceFillCorrector, ExternalCorrector, LmFillCorrector,
    TrainingExample,
};
use fec_core::dataset::{load_corpus, load_dataset, ClaimRecord, Document};
use fec_core::lm::{train_lm, NGramLM};
use fec_core::maskers::{mask_diagnostics, MaskDiagnostics, MaskStrategy, MaskedClaim, MaskedRecord, Masker};
use fec_core::metrics::{score_instance, InstanceRow, MetricReport};
use fec_core::retrieval::{corpus_sentences, gold_passage_recall, index_documents, recall_at_k, EvidenceSet, InvertedIndex, Retriever};
use fec_core::{tokenize, VerdictLabel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{CorrectorKind, ExperimentConfig};

pub const MASKS: &str = "masks.jsonl";
pub const EVIDENCE: &str = "evidence.jsonl";
pub const CORRECTIONS: &str = "corrections.jsonl";
pub const METRICS: &str = "metrics.json";
pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const TRAIN_PAIRS: &str = "train_pairs.jsonl";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Load,
    Index,
    Lm,
    Train,
    Mask,
    Correct,
    Score,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Index => "index",
            Stage::Lm => "lm",
            Stage::Train => "train",
            Stage::Mask => "mask",
            Stage::Correct => "correct",
            Stage::Score => "score",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source:#}")]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError { stage, source: e.into() })
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

/// Retrieved passages for one claim, as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub id: u64,
    pub passages: Vec<EvidencePassage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePassage {
    pub passage_id: u32,
    pub page_id: String,
    pub score: f64,
    pub text: String,
}

impl EvidenceRecord {
    pub fn new(id: u64, ev: &EvidenceSet) -> Self {
        EvidenceRecord {
            id,
            passages: ev
                .items
                .iter()
                .map(|i| EvidencePassage { passage_id: i.passage_id, page_id: i.passage.page_id.clone(), score: i.score, text: i.passage.tokens.original.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub lambda: f64,
    pub exact_match: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDiagnostics {
    pub masker: MaskStrategy,
    pub pairs: usize,
    pub skipped_nei: usize,
    pub skipped_label: usize,
    pub tuning: Vec<TuningRow>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub evaluated: usize,
    pub gold_page_recall: f64,
    pub gold_passage_recall: f64,
    pub masks: MaskDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub system: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub corpus_hash: String,
    pub seed: u64,
    pub masker: MaskStrategy,
    pub train_masker: Option<MaskStrategy>,
    pub evidence: String,
    pub corrector: String,
    pub lambda: f64,
    pub versions: BTreeMap<String, String>,
    /// SHA-256 of every output file except this one.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> anyhow::Result<Manifest> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Hash of the manifest itself; equal across byte-identical runs.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("manifest serializes")))
    }
}

/// Summary of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub metrics: MetricReport,
    pub diagnostics: Diagnostics,
}

pub fn system_name(cfg: &ExperimentConfig) -> String {
    let masker = match cfg.masking.train_strategy {
        Some(t) => format!("{t}->{}", cfg.masking.strategy),
        None => cfg.masking.strategy.to_string(),
    };
    format!("{masker}+{}", cfg.corrector.kind.as_str())
}

/// Records that are masked, corrected and scored: the eval split without NOT_ENOUGH_INFO.
pub fn eval_records<'a>(cfg: &ExperimentConfig, records: &'a [ClaimRecord]) -> Vec<&'a ClaimRecord> {
    records.iter().filter(|r| r.split == cfg.data.eval_split && r.label != VerdictLabel::NotEnoughInfo).collect()
}

/// Data shared by the stages.
pub struct Prepared {
    pub records: Vec<ClaimRecord>,
    pub docs: Vec<Document>,
    pub index: InvertedIndex,
    pub lm: NGramLM,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Prepared, StageError> {
    cfg.validate().at(Stage::Load)?;
    let records = load_dataset(&cfg.dataset_path(), None).at(Stage::Load)?;
    let docs = load_corpus(&cfg.corpus_path()).at(Stage::Load)?;
    let index = index_documents(&docs, cfg.retrieval.window).at(Stage::Index)?;
    let lm = train_lm(&corpus_sentences(&docs), cfg.lm).at(Stage::Lm)?;
    Ok(Prepared { records, docs, index, lm })
}

/// Exact-match rate of evidence fill on `pairs`, tokenwise.
pub fn reconstruction_rate(lm: &NGramLM, cfg: &ExperimentConfig, lambda: f64, examples: &[TrainingExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let fill = EvidenceFillCorrector::new(lm, cfg.corrector.fill_params(lambda));
    let hits = examples
        .iter()
        .filter(|x| match fill.correct(x.pair.id, &x.masked, &x.evidence) {
            Ok(r) => tokenize(&r.correction).tokens == tokenize(&x.pair.target).tokens,
            Err(_) => false,
        })
        .count();
    hits as f64 / examples.len() as f64
}

/// Training examples from `cfg`'s train split under `strategy`, with skip counts (NEI, label filter).
pub fn training_examples(cfg: &ExperimentConfig, data: &Prepared, strategy: MaskStrategy) -> anyhow::Result<(Vec<TrainingExample>, usize, usize)> {
    let masker = Masker::new(cfg.masking.masker(strategy, cfg.seed)).with_lm(&data.lm);
    let retriever = Retriever::new(&data.index, cfg.retrieval.params(), cfg.retrieval.evidence);
    let train: Vec<ClaimRecord> = data.records.iter().filter(|r| r.split == cfg.data.train_split).cloned().collect();
    let mut stream = gen_training_pairs(&train, &masker, retriever, cfg.training.labels, cfg.seed);
    let out = stream.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((out, stream.skipped_nei, stream.skipped_label))
}

fn correct_all(
    cfg: &ExperimentConfig,
    lm: &NGramLM,
    lambda: f64,
    items: &[(u64, MaskedClaim, EvidenceSet)],
) -> anyhow::Result<(Vec<CorrectionResult>, Vec<String>)> {
    let builtin: Box<dyn Corrector + '_> = match cfg.corrector.kind {
        CorrectorKind::Copy => Box::new(CopyCorrector),
        CorrectorKind::EvidenceFill => Box::new(EvidenceFillCorrector::new(lm, cfg.corrector.fill_params(lambda))),
        CorrectorKind::LmFill => Box::new(LmFillCorrector { lm }),
        CorrectorKind::External => {
            let client = ExternalCorrector::new(cfg.endpoint()?).with_timeout(Duration::from_secs_f64(cfg.corrector.timeout_secs));
            let mut ok = Vec::new();
            let mut failed = Vec::new();
            for r in client.correct_batch(items)? {
                match r {
                    Ok(c) => ok.push(c),
                    Err(e) => failed.push(e.to_string()),
                }
            }
            return Ok((ok, failed));
        }
    };
    let mut out = Vec::with_capacity(items.len());
    for (id, m, e) in items {
        out.push(builtin.correct(*id, m, e)?);
    }
    Ok((out, Vec::new()))
}

/// Run every stage and persist the outputs under the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, StageError> {
    Ok(run_stages(cfg, Stage::Score)?.expect("a full run yields a summary"))
}

/// Run stages up to and including `until`; the manifest and summary come only from full runs.
pub fn run_stages(cfg: &ExperimentConfig, until: Stage) -> Result<Option<RunSummary>, StageError> {
    let data = prepare_data(cfg)?;
    let dir = cfg.output_path();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).at(Stage::Load)?;
    for stale in [MASKS, EVIDENCE, CORRECTIONS, METRICS, DIAGNOSTICS, TRAIN_PAIRS, MANIFEST] {
        let _ = std::fs::remove_file(dir.join(stale));
    }

    let mut lambda = cfg.corrector.lambda;
    let mut training = None;
    if let Some(strategy) = cfg.masking.train_strategy {
        let (pairs, skipped_nei, skipped_label) = training_examples(cfg, &data, strategy).at(Stage::Train)?;
        write_jsonl(&dir.join(TRAIN_PAIRS), pairs.iter().map(|x| &x.pair)).at(Stage::Train)?;
        let subset = &pairs[..pairs.len().min(cfg.training.tune_limit)];
        let mut grid = vec![cfg.corrector.lambda];
        grid.extend(cfg.training.lambda_grid.iter().copied().filter(|l| *l != cfg.corrector.lambda));
        let tuning: Vec<TuningRow> = grid.iter().map(|&l| TuningRow { lambda: l, exact_match: reconstruction_rate(&data.lm, cfg, l, subset) }).collect();
        // the configured value is tried first, so it wins ties
        let best = tuning.iter().fold(&tuning[0], |b, r| if r.exact_match > b.exact_match { r } else { b });
        lambda = best.lambda;
        log::info!("tuned lambda {lambda} on {} pairs from the {strategy} masker", subset.len());
        training = Some(TrainingDiagnostics { masker: strategy, pairs: pairs.len(), skipped_nei, skipped_label, tuning, lambda });
    }

    let eval = eval_records(cfg, &data.records);
    let masker = Masker::new(cfg.masking.masker(cfg.masking.strategy, cfg.seed)).with_lm(&data.lm);
    let retriever = Retriever::new(&data.index, cfg.retrieval.params(), cfg.retrieval.evidence);
    let mut items = Vec::with_capacity(eval.len());
    for r in &eval {
        let (m, e) = prepare(r, &masker, &retriever, cfg.seed).at(Stage::Mask)?;
        items.push((r.id, m, e));
    }
    write_jsonl(&dir.join(EVIDENCE), items.iter().map(|(id, _, e)| EvidenceRecord::new(*id, e))).at(Stage::Mask)?;
    write_jsonl(&dir.join(MASKS), items.iter().map(|(id, m, _)| MaskedRecord::new(*id, m))).at(Stage::Mask)?;
    let owned: Vec<ClaimRecord> = eval.iter().map(|r| (*r).clone()).collect();
    let masked: Vec<MaskedClaim> = items.iter().map(|(_, m, _)| m.clone()).collect();
    let diagnostics = Diagnostics {
        evaluated: items.len(),
        gold_page_recall: recall_at_k(&owned, &data.index, cfg.retrieval.k).at(Stage::Mask)?,
        gold_passage_recall: gold_passage_recall(&owned, &data.index, cfg.retrieval.k).at(Stage::Mask)?,
        masks: mask_diagnostics(&masked),
        training,
    };
    write_json(&dir.join(DIAGNOSTICS), &diagnostics).at(Stage::Mask)?;
    if until <= Stage::Mask {
        return Ok(None);
    }

    let (corrections, failed) = correct_all(cfg, &data.lm, lambda, &items).at(Stage::Correct)?;
    write_jsonl(&dir.join(CORRECTIONS), &corrections).at(Stage::Correct)?;
    if !failed.is_empty() {
        return Err(anyhow!("{} of {} items failed; first: {}", failed.len(), items.len(), failed[0])).at(Stage::Correct);
    }
    if until <= Stage::Correct {
        return Ok(None);
    }

    let metrics = score_corrections(&system_name(cfg), &owned, &corrections).at(Stage::Score)?;
    write_json(&dir.join(METRICS), &metrics).at(Stage::Score)?;

    let mut files = BTreeMap::new();
    for name in [MASKS, EVIDENCE, CORRECTIONS, METRICS, DIAGNOSTICS, TRAIN_PAIRS] {
        let p = dir.join(name);
        if p.exists() {
            files.insert(name.to_string(), sha256_file(&p).at(Stage::Score)?);
        }
    }
    let versions = BTreeMap::from([
        ("fec-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("index-format".to_string(), "fec-index v1".to_string()),
        ("lm-format".to_string(), "fec-ngram-lm v1".to_string()),
    ]);
    let manifest = Manifest {
        system: system_name(cfg),
        config_hash: cfg.hash(),
        dataset_hash: sha256_file(&cfg.dataset_path()).at(Stage::Score)?,
        corpus_hash: sha256_file(&cfg.corpus_path()).at(Stage::Score)?,
        seed: cfg.seed,
        masker: cfg.masking.strategy,
        train_masker: cfg.masking.train_strategy,
        evidence: cfg.retrieval.evidence.to_string(),
        corrector: cfg.corrector.kind.as_str().to_string(),
        lambda,
        versions,
        files,
    };
    write_json(&dir.join(MANIFEST), &manifest).at(Stage::Score)?;
    Ok(Some(RunSummary { dir, manifest, metrics, diagnostics }))
}

/// Score corrections against record references; every record needs a correction.
pub fn score_corrections(system: &str, records: &[ClaimRecord], corrections: &[CorrectionResult]) -> anyhow::Result<MetricReport> {
    let by_id: BTreeMap<u64, &CorrectionResult> = corrections.iter().map(|c| (c.id, c)).collect();
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let c = by_id.get(&r.id).ok_or_else(|| anyhow!("no correction for record {}", r.id))?;
        let scores = score_instance(&tokenize(&r.claim).tokens, &tokenize(&c.correction).tokens, &tokenize(&r.reference).tokens)
            .with_context(|| format!("scoring record {}", r.id))?;
        rows.push(InstanceRow { id: r.id, scores });
    }
    Ok(MetricReport::new(system, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub pairs: usize,
    pub skipped_nei: usize,
    pub skipped_label: usize,
}

/// Write distant-supervision pairs for the train split to `out`.
pub fn write_training_pairs(cfg: &ExperimentConfig, strategy: MaskStrategy, out: &Path) -> Result<TrainingSummary, StageError> {
    let data = prepare_data(cfg)?;
    let (examples, skipped_nei, skipped_label) = training_examples(cfg, &data, strategy).at(Stage::Train)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).at(Stage::Train)?;
    }
    write_jsonl(out, examples.iter().map(|x| &x.pair)).at(Stage::Train)?;
    Ok(TrainingSummary { pairs: examples.len(), skipped_nei, skipped_label })
}
