//! SARI, ROUGE-N, BLEU and correlation statistics.
//!
//! SARI compares an output against both its source and a single reference.
//! For each n-gram order 1..=4, with multisets S (source), O (output) and
//! R (reference):
//!
//! * keep: precision |S⊓O⊓R| / |S⊓O|, recall |S⊓O⊓R| / |S⊓R|
//! * add: candidates O∖S against targets R∖S, F1
//! * delete: candidates S∖O against targets S∖R, precision only
//!
//! Ratios with empty denominators follow fixed conventions: an empty
//! candidate set with an empty target set scores 1. For F1 components an
//! empty candidate set with a nonempty target has precision 1 and recall 0,
//! and a nonempty candidate set with an empty target has precision 0. The
//! precision-only delete component scores 0 whenever exactly one of
//! candidates and targets is empty.

use serde::{Deserialize, Serialize};

use crate::text::{ngrams, NGramMultiset};

pub const SARI_MAX_ORDER: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("unsupported order {0}")]
    BadOrder(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SariScore {
    pub keep_f1: f64,
    pub add_f1: f64,
    pub del_precision: f64,
    pub final_score: f64,
}

impl SariScore {
    fn from_components(keep_f1: f64, add_f1: f64, del_precision: f64) -> Self {
        SariScore { keep_f1, add_f1, del_precision, final_score: (keep_f1 + add_f1 + del_precision) / 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderScore {
    pub keep_f1: f64,
    pub add_f1: f64,
    pub del_precision: f64,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// F1 of `candidates` against `targets` with the vacuous-case conventions.
fn set_f1(candidates: &NGramMultiset, targets: &NGramMultiset) -> f64 {
    let c = candidates.total();
    let t = targets.total();
    let hit = candidates.intersect(targets).total() as f64;
    let p = if c == 0 { 1.0 } else if t == 0 { 0.0 } else { hit / c as f64 };
    let r = if t == 0 { 1.0 } else { hit / t as f64 };
    f1(p, r)
}

fn set_precision(candidates: &NGramMultiset, targets: &NGramMultiset) -> f64 {
    let c = candidates.total();
    let t = targets.total();
    match (c, t) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => candidates.intersect(targets).total() as f64 / c as f64,
    }
}

/// SARI components at a single n-gram order.
pub fn sari_order<S: AsRef<str>>(source: &[S], output: &[S], reference: &[S], n: usize) -> Result<OrderScore, MetricError> {
    let s = ngrams(source, n).map_err(|_| MetricError::BadOrder(n))?;
    let o = ngrams(output, n).map_err(|_| MetricError::BadOrder(n))?;
    let r = ngrams(reference, n).map_err(|_| MetricError::BadOrder(n))?;

    let keep_cand = s.intersect(&o);
    let keep_target = s.intersect(&r);
    // keep precision and recall share the numerator |S⊓O⊓R|
    let keep_f1 = set_f1(&keep_cand, &keep_target);

    let add_f1 = set_f1(&o.difference(&s), &r.difference(&s));
    let del_precision = set_precision(&s.difference(&o), &s.difference(&r));
    Ok(OrderScore { keep_f1, add_f1, del_precision })
}

/// SARI of one output against its source and a single reference.
pub fn sari<S: AsRef<str>>(source: &[S], output: &[S], reference: &[S]) -> Result<SariScore, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let (mut keep, mut add, mut del) = (0.0, 0.0, 0.0);
    for n in 1..=SARI_MAX_ORDER {
        let o = sari_order(source, output, reference, n)?;
        keep += o.keep_f1;
        add += o.add_f1;
        del += o.del_precision;
    }
    let k = SARI_MAX_ORDER as f64;
    Ok(SariScore::from_components(keep / k, add / k, del / k))
}

/// ROUGE-N recall with multiset clipping.
pub fn rouge_n<S: AsRef<str>>(output: &[S], reference: &[S], n: usize) -> Result<f64, MetricError> {
    if !(1..=2).contains(&n) {
        return Err(MetricError::BadOrder(n));
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    if reference.len() < n {
        log::warn!("reference shorter than ROUGE order {n}; scoring 0");
        return Ok(0.0);
    }
    let o = ngrams(output, n).expect("order checked");
    let r = ngrams(reference, n).expect("order checked");
    Ok(o.intersect(&r).total() as f64 / r.total() as f64)
}

/// BLEU with uniform weights over orders 1..=k and the standard brevity penalty.
pub fn bleu_k<S: AsRef<str>>(output: &[S], reference: &[S], k: usize) -> Result<f64, MetricError> {
    if !(1..=2).contains(&k) {
        return Err(MetricError::BadOrder(k));
    }
    if output.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=k {
        let o = ngrams(output, n).expect("order checked");
        let r = ngrams(reference, n).expect("order checked");
        let total = o.total();
        let clipped = o.intersect(&r).total();
        if total == 0 || clipped == 0 {
            return Ok(0.0);
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c = output.len() as f64;
    let r = reference.len() as f64;
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(bp * (log_sum / k as f64).exp())
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(MetricError::TooFewPoints(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let scale = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1.0);
    // variance below rounding noise of the inputs counts as zero
    if sxx <= 1e-24 * scale(x).powi(2) * n || syy <= 1e-24 * scale(y).powi(2) * n {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Automated scores of one output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceScores {
    pub sari: SariScore,
    pub rouge1: f64,
    pub rouge2: f64,
    pub bleu1: f64,
    pub bleu2: f64,
}

pub fn score_instance<S: AsRef<str>>(source: &[S], output: &[S], reference: &[S]) -> Result<InstanceScores, MetricError> {
    Ok(InstanceScores {
        sari: sari(source, output, reference)?,
        rouge1: rouge_n(output, reference, 1)?,
        rouge2: rouge_n(output, reference, 2)?,
        bleu1: bleu_k(output, reference, 1)?,
        bleu2: bleu_k(output, reference, 2)?,
    })
}

/// Names of the per-system mean columns, in report order.
pub const METRIC_NAMES: [&str; 8] = [
    "sari_keep",
    "sari_delete",
    "sari_add",
    "sari_final",
    "rouge1",
    "rouge2",
    "bleu1",
    "bleu2",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MeanScores {
    pub sari_keep: f64,
    pub sari_delete: f64,
    pub sari_add: f64,
    pub sari_final: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub bleu1: f64,
    pub bleu2: f64,
}

impl MeanScores {
    pub fn of(scores: &[InstanceScores]) -> Self {
        if scores.is_empty() {
            return MeanScores::default();
        }
        let n = scores.len() as f64;
        let mean = |f: fn(&InstanceScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
        MeanScores {
            sari_keep: mean(|s| s.sari.keep_f1),
            sari_delete: mean(|s| s.sari.del_precision),
            sari_add: mean(|s| s.sari.add_f1),
            sari_final: mean(|s| s.sari.final_score),
            rouge1: mean(|s| s.rouge1),
            rouge2: mean(|s| s.rouge2),
            bleu1: mean(|s| s.bleu1),
            bleu2: mean(|s| s.bleu2),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "sari_keep" => self.sari_keep,
            "sari_delete" => self.sari_delete,
            "sari_add" => self.sari_add,
            "sari_final" => self.sari_final,
            "rouge1" => self.rouge1,
            "rouge2" => self.rouge2,
            "bleu1" => self.bleu1,
            "bleu2" => self.bleu2,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: u64,
    pub scores: InstanceScores,
}

/// Per-instance and mean scores of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub system: String,
    pub instances: Vec<InstanceRow>,
    pub mean: MeanScores,
}

impl MetricReport {
    pub fn new(system: impl Into<String>, instances: Vec<InstanceRow>) -> Self {
        let scores: Vec<InstanceScores> = instances.iter().map(|r| r.scores).collect();
        MetricReport { system: system.into(), mean: MeanScores::of(&scores), instances }
    }
}

/// Human questions in correlation-table column order.
pub const HUMAN_QUESTIONS: [&str; 3] = ["intelligible", "supported", "corrected"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Value(f64),
    Blank { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub metric: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub columns: Vec<String>,
    pub rows: Vec<CorrelationRow>,
}

impl CorrelationTable {
    pub fn cell(&self, metric: &str, question: &str) -> Option<&Cell> {
        let col = self.columns.iter().position(|c| c == question)?;
        self.rows.iter().find(|r| r.metric == metric).map(|r| &r.cells[col])
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<12}", "metric");
        for c in &self.columns {
            out.push_str(&format!(" {c:>12}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:<12}", r.metric));
            for c in &r.cells {
                match c {
                    Cell::Value(v) => out.push_str(&format!(" {v:>12.3}")),
                    Cell::Blank { reason } => out.push_str(&format!(" {:>12}", format!("({reason})"))),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Human aggregate percentages of one system, keyed like [`HUMAN_QUESTIONS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanScores {
    pub intelligible: f64,
    pub supported: f64,
    pub corrected: f64,
}

impl HumanScores {
    pub fn get(&self, q: &str) -> Option<f64> {
        match q {
            "intelligible" => Some(self.intelligible),
            "supported" => Some(self.supported),
            "corrected" => Some(self.corrected),
            _ => None,
        }
    }
}

/// Pearson r of every metric mean against every human question, across systems.
///
/// Systems are matched by name; systems missing from either side are ignored.
pub fn correlation_report(
    metric_means: &[(String, MeanScores)],
    human: &[(String, HumanScores)],
) -> Result<CorrelationTable, MetricError> {
    let paired: Vec<(&MeanScores, &HumanScores)> = metric_means
        .iter()
        .filter_map(|(sys, m)| human.iter().find(|(h, _)| h == sys).map(|(_, h)| (m, h)))
        .collect();
    if paired.len() < 3 {
        return Err(MetricError::TooFewPoints(paired.len()));
    }
    let rows = METRIC_NAMES
        .iter()
        .map(|&metric| {
            let x: Vec<f64> = paired.iter().map(|(m, _)| m.get(metric).unwrap()).collect();
            let cells = HUMAN_QUESTIONS
                .iter()
                .map(|&q| {
                    let y: Vec<f64> = paired.iter().map(|(_, h)| h.get(q).unwrap()).collect();
                    match pearson(&x, &y) {
                        Ok(r) => Cell::Value(r),
                        Err(e) => Cell::Blank { reason: e.to_string() },
                    }
                })
                .collect();
            CorrelationRow { metric: metric.to_string(), cells }
        })
        .collect();
    Ok(CorrelationTable { columns: HUMAN_QUESTIONS.iter().map(|s| s.to_string()).collect(), rows })
}
