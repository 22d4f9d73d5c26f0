//! Comparison tables across experiment directories.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fec_core::metrics::MetricReport;
use serde::{Deserialize, Serialize};

use crate::experiment::{Manifest, METRICS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `train->test` when the run trained on its own masker, else the test masker.
    pub masker: String,
    pub evidence: String,
    pub corrector: String,
    pub keep: f64,
    pub delete: f64,
    pub add: f64,
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub dataset_hash: String,
    pub rows: Vec<ReportRow>,
}

pub fn load_metrics(dir: &Path) -> anyhow::Result<MetricReport> {
    let path = dir.join(METRICS);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// One row per run; refuses runs made on different datasets.
pub fn report(dirs: &[PathBuf]) -> anyhow::Result<ReportTable> {
    if dirs.is_empty() {
        bail!("report needs at least one experiment directory");
    }
    let mut rows = Vec::with_capacity(dirs.len());
    let mut dataset: Option<(String, &PathBuf)> = None;
    for dir in dirs {
        let manifest = Manifest::load(dir)?;
        match &dataset {
            None => dataset = Some((manifest.dataset_hash.clone(), dir)),
            Some((hash, first)) if *hash != manifest.dataset_hash => bail!(
                "mixed dataset versions: {} used dataset {} but {} used {}",
                first.display(),
                &hash[..12],
                dir.display(),
                &manifest.dataset_hash[..12.min(manifest.dataset_hash.len())]
            ),
            Some(_) => {}
        }
        let m = load_metrics(dir)?.mean;
        let masker = match manifest.train_masker {
            Some(t) => format!("{t}->{}", manifest.masker),
            None => manifest.masker.to_string(),
        };
        rows.push(ReportRow {
            masker,
            evidence: manifest.evidence,
            corrector: manifest.corrector,
            keep: m.sari_keep,
            delete: m.sari_delete,
            add: m.sari_add,
            final_score: m.sari_final,
        });
    }
    Ok(ReportTable { dataset_hash: dataset.map(|d| d.0).unwrap_or_default(), rows })
}

impl ReportTable {
    pub fn render(&self) -> String {
        let header = ["Masker", "Evidence", "Corrector", "Keep", "Delete", "Add", "Final"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.masker.clone(),
                    r.evidence.clone(),
                    r.corrector.clone(),
                    format!("{:.3}", r.keep),
                    format!("{:.3}", r.delete),
                    format!("{:.3}", r.add),
                    format!("{:.3}", r.final_score),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: Vec<&str>| {
            let padded: Vec<String> = cells.iter().zip(widths).enumerate().map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") }).collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let mut out = line(header.to_vec());
        out.push_str(&format!("|{}|\n", widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")));
        for row in &body {
            out.push_str(&line(row.iter().map(String::as_str).collect()));
        }
        out
    }
}
