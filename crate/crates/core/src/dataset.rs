//! Line-delimited claim records and corpus documents.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::text::VerdictLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Pointer to one sentence of a corpus page.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvidenceRef(pub String, pub u32);

impl EvidenceRef {
    pub fn page(&self) -> &str {
        &self.0
    }

    pub fn sentence(&self) -> u32 {
        self.1
    }
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: u64,
    /// The mutated claim.
    pub claim: String,
    /// The unmodified fact the claim was derived from; the correction target.
    pub reference: String,
    pub mutation: String,
    pub label: VerdictLabel,
    #[serde(rename = "evidence")]
    pub evidence_refs: Vec<EvidenceRef>,
    pub split: Split,
}

/// A corpus page. Text is NFC-normalized on load so that token spans index it directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub page: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {}", join_errors(.0))]
    Schema(Vec<LineError>),
}

fn join_errors(errs: &[LineError]) -> String {
    errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

const REQUIRED_FIELDS: [&str; 7] = ["id", "claim", "reference", "mutation", "label", "evidence", "split"];

fn parse_record(line: &str) -> Result<ClaimRecord, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("record is not an object")?;
    for field in REQUIRED_FIELDS {
        if !obj.contains_key(field) {
            return Err(format!("missing field {field:?}"));
        }
    }
    if let Some(label) = obj["label"].as_str() {
        label.parse::<VerdictLabel>()?;
    }
    let rec: ClaimRecord = serde_json::from_value(value).map_err(|e| e.to_string())?;
    if rec.label != VerdictLabel::NotEnoughInfo {
        if rec.reference.trim().is_empty() {
            return Err(format!("{} record with empty reference", rec.label));
        }
        if rec.evidence_refs.is_empty() {
            return Err(format!("{} record without evidence", rec.label));
        }
    }
    Ok(rec)
}

/// Parse records from a reader. All malformed lines are reported together.
pub fn read_records<R: BufRead>(reader: R, split: Option<Split>) -> Result<Vec<ClaimRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Ok(rec) => {
                if !seen.insert(rec.id) {
                    errors.push(LineError { line: i + 1, message: format!("duplicate id {}", rec.id) });
                } else if split.is_none_or(|s| s == rec.split) {
                    records.push(rec);
                }
            }
            Err(message) => errors.push(LineError { line: i + 1, message }),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(DatasetError::Schema(errors))
    }
}

/// Load the records of one split (or all of them) from a line-delimited file.
pub fn load_dataset(path: &Path, split: Option<Split>) -> Result<Vec<ClaimRecord>, DatasetError> {
    read_records(BufReader::new(File::open(path)?), split)
}

pub fn write_records<W: Write>(mut w: W, records: &[ClaimRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>, DatasetError> {
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Document>(&line) {
            Ok(mut d) => {
                d.text = d.text.nfc().collect();
                docs.push(d);
            }
            Err(e) => errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(docs)
    } else {
        Err(DatasetError::Schema(errors))
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>, DatasetError> {
    read_corpus(BufReader::new(File::open(path)?))
}

pub fn write_corpus<W: Write>(mut w: W, docs: &[Document]) -> std::io::Result<()> {
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Expected instance counts per (split, label).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub counts: BTreeMap<(Split, VerdictLabel), usize>,
}

impl SplitManifest {
    /// Counts of the released dataset.
    pub fn fever_fec() -> Self {
        use Split::*;
        use VerdictLabel::*;
        let cells = [
            ((Train, Supports), 37961),
            ((Validation, Supports), 1477),
            ((Test, Supports), 1593),
            ((Train, Refutes), 20075),
            ((Validation, Refutes), 2091),
            ((Test, Refutes), 2289),
            ((Train, NotEnoughInfo), 21934),
            ((Validation, NotEnoughInfo), 1870),
            ((Test, NotEnoughInfo), 2037),
        ];
        SplitManifest { counts: cells.into_iter().collect() }
    }

    /// Manifest matching whatever `records` contain.
    pub fn observed(records: &[ClaimRecord]) -> Self {
        let mut counts = BTreeMap::new();
        for r in records {
            *counts.entry((r.split, r.label)).or_insert(0) += 1;
        }
        SplitManifest { counts }
    }

    /// Restrict to the labels usable for correction.
    pub fn without_nei(mut self) -> Self {
        self.counts.retain(|(_, l), _| *l != VerdictLabel::NotEnoughInfo);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellCount {
    pub split: Split,
    pub label: VerdictLabel,
    pub observed: usize,
    pub expected: usize,
}

impl fmt::Display for CellCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}) {}", self.split, self.label, self.observed)?;
        if self.observed != self.expected {
            write!(f, "≠{}", self.expected)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub cells: Vec<CellCount>,
    /// Pages referenced as evidence in both train and test.
    pub shared_pages: Vec<String>,
}

impl ValidationReport {
    pub fn counts_match(&self) -> bool {
        self.cells.iter().all(|c| c.observed == c.expected)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellCount> {
        self.cells.iter().filter(|c| c.observed != c.expected)
    }

    pub fn disjoint(&self) -> bool {
        self.shared_pages.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.counts_match()
    }
}

/// Compare observed per-cell counts with the manifest and check that train
/// and test evidence pages do not overlap.
pub fn validate_splits(records: &[ClaimRecord], manifest: &SplitManifest) -> ValidationReport {
    let observed = SplitManifest::observed(records).counts;
    let keys: BTreeSet<_> = manifest.counts.keys().chain(observed.keys()).copied().collect();
    let cells = keys
        .into_iter()
        .map(|(split, label)| CellCount {
            split,
            label,
            observed: observed.get(&(split, label)).copied().unwrap_or(0),
            expected: manifest.counts.get(&(split, label)).copied().unwrap_or(0),
        })
        .collect();
    let pages = |s: Split| -> BTreeSet<&str> {
        records
            .iter()
            .filter(|r| r.split == s)
            .flat_map(|r| r.evidence_refs.iter().map(|e| e.page()))
            .collect()
    };
    let train = pages(Split::Train);
    let shared_pages: Vec<String> = pages(Split::Test)
        .intersection(&train)
        .map(|p| p.to_string())
        .collect();
    if !shared_pages.is_empty() {
        log::warn!("{} evidence pages shared between train and test", shared_pages.len());
    }
    ValidationReport { cells, shared_pages }
}
