//! Inter-rater agreement and per-system aggregate scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Batch, Q3Answer, Question, Rating, TaskId};
use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub observed: f64,
    pub expected: f64,
    pub n: usize,
}

/// Cohen's κ over paired category indices in `0..n_categories`.
pub fn cohen_kappa(pairs: &[(usize, usize)], n_categories: usize) -> Result<Kappa, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    let n = pairs.len() as f64;
    let mut first = vec![0usize; n_categories];
    let mut second = vec![0usize; n_categories];
    let mut agree = 0usize;
    for &(a, b) in pairs {
        if a >= n_categories || b >= n_categories {
            return Err(EvalError::Validation(format!("category out of range: ({a}, {b})")));
        }
        first[a] += 1;
        second[b] += 1;
        agree += usize::from(a == b);
    }
    let observed = agree as f64 / n;
    let expected: f64 = first.iter().zip(&second).map(|(&x, &y)| (x as f64 / n) * (y as f64 / n)).sum();
    if (1.0 - expected).abs() < 1e-12 {
        log::warn!("both raters used one identical category throughout; kappa defined as 1");
        return Ok(Kappa { kappa: 1.0, observed, expected, n: pairs.len() });
    }
    Ok(Kappa { kappa: (observed - expected) / (1.0 - expected), observed, expected, n: pairs.len() })
}

/// Paired ratings per double-rated task, ordered by assignment.
pub fn rating_pairs<'a>(batch: &Batch, ratings: &'a BTreeMap<(TaskId, String), Rating>) -> Vec<(&'a Rating, &'a Rating)> {
    batch
        .tasks
        .iter()
        .filter(|t| t.is_double())
        .filter_map(|t| {
            let a = ratings.get(&(t.task_id, t.raters[0].clone()))?;
            let b = ratings.get(&(t.task_id, t.raters[1].clone()))?;
            Some((a, b))
        })
        .collect()
}

pub fn question_kappa(batch: &Batch, ratings: &BTreeMap<(TaskId, String), Rating>, q: Question) -> Result<Kappa, EvalError> {
    let pairs: Vec<(usize, usize)> = rating_pairs(batch, ratings).into_iter().map(|(a, b)| (q.category(a), q.category(b))).collect();
    cohen_kappa(&pairs, q.n_categories())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAgreement {
    pub question: Question,
    pub overlap: usize,
    /// Absent when no task has both ratings yet.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub questions: Vec<QuestionAgreement>,
}

pub fn agreement(batch: &Batch, ratings: &BTreeMap<(TaskId, String), Rating>) -> AgreementReport {
    let questions = Question::ALL
        .into_iter()
        .map(|q| match question_kappa(batch, ratings, q) {
            Ok(k) => QuestionAgreement { question: q, overlap: k.n, kappa: Some(k.kappa) },
            Err(_) => QuestionAgreement { question: q, overlap: 0, kappa: None },
        })
        .collect();
    AgreementReport { questions }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Corrected counts only `improved`.
    #[default]
    Strict,
    /// `no_correction_needed` earns half a point on a supported correction.
    HalfPoint,
}

impl std::str::FromStr for ScoringMode {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ScoringMode::Strict),
            "half_point" | "half-point" => Ok(ScoringMode::HalfPoint),
            _ => Err(EvalError::Validation(format!("unknown scoring mode {s:?}"))),
        }
    }
}

fn points(r: &Rating, mode: ScoringMode) -> [f64; 3] {
    let yes = |b: bool| if b { 1.0 } else { 0.0 };
    let corrected = match (r.q3_corrected, mode) {
        (Q3Answer::Improved, _) => 1.0,
        (Q3Answer::NoCorrectionNeeded, ScoringMode::HalfPoint) if r.q2_supported.is_yes() => 0.5,
        _ => 0.0,
    };
    [yes(r.q1_intelligible.is_yes()), yes(r.q2_supported.is_yes()), corrected]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemAggregate {
    pub system_id: String,
    /// Tasks with at least one rating.
    pub rated_tasks: usize,
    pub intelligible: f64,
    pub supported: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mode: ScoringMode,
    pub systems: Vec<SystemAggregate>,
}

/// Percentages per system. A task rated twice contributes the mean of its two ratings.
pub fn aggregate(batch: &Batch, ratings: &BTreeMap<(TaskId, String), Rating>, mode: ScoringMode) -> AggregateReport {
    let mut per_system: BTreeMap<&str, (usize, [f64; 3])> = BTreeMap::new();
    for task in &batch.tasks {
        let got: Vec<[f64; 3]> = task
            .raters
            .iter()
            .filter_map(|r| ratings.get(&(task.task_id, r.clone())))
            .map(|r| points(r, mode))
            .collect();
        if got.is_empty() {
            continue;
        }
        let entry = per_system.entry(&task.system_id).or_insert((0, [0.0; 3]));
        entry.0 += 1;
        for q in 0..3 {
            entry.1[q] += got.iter().map(|p| p[q]).sum::<f64>() / got.len() as f64;
        }
    }
    let systems = per_system
        .into_iter()
        .map(|(sys, (n, sums))| {
            let pct = |s: f64| 100.0 * s / n as f64;
            SystemAggregate { system_id: sys.to_string(), rated_tasks: n, intelligible: pct(sums[0]), supported: pct(sums[1]), corrected: pct(sums[2]) }
        })
        .collect();
    AggregateReport { mode, systems }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EvalTask, YesNo};

    #[test]
    fn hand_confusion_matrix() {
        // 6 yes-yes, 2 no-no, one each off the diagonal
        let mut pairs = vec![(0, 0); 6];
        pairs.extend([(1, 1), (1, 1), (0, 1), (1, 0)]);
        let k = cohen_kappa(&pairs, 2).unwrap();
        let (po, pe) = (0.8, 0.7 * 0.7 + 0.3 * 0.3);
        assert!((k.kappa - (po - pe) / (1.0 - pe)).abs() < 1e-12);
        assert!((k.kappa - 0.22 / 0.42).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_degenerate_agreement() {
        assert_eq!(cohen_kappa(&[(0, 0), (1, 1), (2, 2)], 3).unwrap().kappa, 1.0);
        let constant = cohen_kappa(&[(1, 1); 4], 2).unwrap();
        assert_eq!(constant.kappa, 1.0);
        assert!(matches!(cohen_kappa(&[], 2), Err(EvalError::NoOverlap)));
    }

    fn task(id: TaskId, sys: &str, raters: &[&str]) -> EvalTask {
        EvalTask {
            task_id: id,
            instance_id: id as u64,
            claim: String::new(),
            evidence_texts: vec![],
            correction: String::new(),
            system_id: sys.into(),
            raters: raters.iter().map(|r| r.to_string()).collect(),
        }
    }

    fn rating(id: TaskId, rater: &str, q1: YesNo, q2: YesNo, q3: Q3Answer) -> ((TaskId, String), Rating) {
        let r = Rating { task_id: id, rater_id: rater.into(), q1_intelligible: q1, q2_supported: q2, q3_corrected: q3, auto_filled: false, submitted_at_ms: 0 };
        ((id, rater.into()), r)
    }

    #[test]
    fn aggregate_arithmetic() {
        let tasks: Vec<EvalTask> = (0..10).map(|i| task(i, "s", &["a"])).collect();
        let batch = Batch { config: Default::default(), raters: vec!["a".into()], tasks };
        let ratings: BTreeMap<_, _> = (0..10)
            .map(|i| {
                if i == 0 {
                    rating(i, "a", YesNo::No, YesNo::No, Q3Answer::UnrelatedAdded)
                } else {
                    rating(i, "a", YesNo::Yes, YesNo::Yes, Q3Answer::Improved)
                }
            })
            .collect();
        let rep = aggregate(&batch, &ratings, ScoringMode::Strict);
        assert_eq!(rep.systems[0].intelligible, 90.0);
        assert_eq!(rep.systems[0].corrected, 90.0);
    }

    #[test]
    fn all_no_gives_zero_row() {
        let batch = Batch { config: Default::default(), raters: vec!["a".into()], tasks: (0..4).map(|i| task(i, "s", &["a"])).collect() };
        let ratings: BTreeMap<_, _> = (0..4).map(|i| rating(i, "a", YesNo::No, YesNo::No, Q3Answer::UnrelatedAdded)).collect();
        let s = &aggregate(&batch, &ratings, ScoringMode::Strict).systems[0];
        assert_eq!((s.intelligible, s.supported, s.corrected), (0.0, 0.0, 0.0));
    }

    #[test]
    fn disagreement_on_double_task_counts_half() {
        let batch = Batch { config: Default::default(), raters: vec!["a".into(), "b".into()], tasks: vec![task(0, "s", &["a", "b"])] };
        let ratings: BTreeMap<_, _> = [
            rating(0, "a", YesNo::Yes, YesNo::No, Q3Answer::UnrelatedAdded),
            rating(0, "b", YesNo::No, YesNo::No, Q3Answer::UnrelatedAdded),
        ]
        .into_iter()
        .collect();
        assert_eq!(aggregate(&batch, &ratings, ScoringMode::Strict).systems[0].intelligible, 50.0);
    }

    #[test]
    fn half_point_mode() {
        let batch = Batch { config: Default::default(), raters: vec!["a".into()], tasks: vec![task(0, "s", &["a"]), task(1, "s", &["a"])] };
        let ratings: BTreeMap<_, _> = [
            rating(0, "a", YesNo::Yes, YesNo::Yes, Q3Answer::NoCorrectionNeeded),
            rating(1, "a", YesNo::Yes, YesNo::No, Q3Answer::NoCorrectionNeeded),
        ]
        .into_iter()
        .collect();
        assert_eq!(aggregate(&batch, &ratings, ScoringMode::Strict).systems[0].corrected, 0.0);
        assert_eq!(aggregate(&batch, &ratings, ScoringMode::HalfPoint).systems[0].corrected, 25.0);
    }
}
