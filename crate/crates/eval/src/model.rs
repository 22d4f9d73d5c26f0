//! Tasks, ratings and batch construction.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::EvalError;

pub type TaskId = u32;

/// One system's correction of one instance, as produced by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub instance_id: u64,
    pub claim: String,
    pub evidence: Vec<String>,
    pub correction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutputs {
    pub system_id: String,
    pub outputs: Vec<SystemOutput>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Open,
    Partial,
    Complete,
}

/// Internal task record. `system_id` is kept here and never leaves through [`TaskView`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTask {
    pub task_id: TaskId,
    pub instance_id: u64,
    pub claim: String,
    pub evidence_texts: Vec<String>,
    pub correction: String,
    pub system_id: String,
    pub raters: Vec<String>,
}

impl EvalTask {
    pub fn view(&self) -> TaskView {
        TaskView {
            task_id: self.task_id,
            claim: self.claim.clone(),
            evidence_texts: self.evidence_texts.clone(),
            correction: self.correction.clone(),
        }
    }

    pub fn is_double(&self) -> bool {
        self.raters.len() == 2
    }
}

/// What a rater is shown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskView {
    pub task_id: TaskId,
    pub claim: String,
    pub evidence_texts: Vec<String>,
    pub correction: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn is_yes(self) -> bool {
        self == YesNo::Yes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Q3Answer {
    Improved,
    UnrelatedAdded,
    NoCorrectionNeeded,
}

impl Q3Answer {
    pub const ALL: [Q3Answer; 3] = [Q3Answer::Improved, Q3Answer::UnrelatedAdded, Q3Answer::NoCorrectionNeeded];
}

/// Ratings as posted by a client; downstream answers may be omitted after a "no".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingSubmission {
    pub task_id: TaskId,
    pub rater_id: String,
    pub q1_intelligible: YesNo,
    #[serde(default)]
    pub q2_supported: Option<YesNo>,
    #[serde(default)]
    pub q3_corrected: Option<Q3Answer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub task_id: TaskId,
    pub rater_id: String,
    pub q1_intelligible: YesNo,
    pub q2_supported: YesNo,
    pub q3_corrected: Q3Answer,
    /// True when the cascade filled q2 or q3.
    pub auto_filled: bool,
    /// Milliseconds since the Unix epoch.
    pub submitted_at_ms: u64,
}

impl Rating {
    /// Apply the cascade: a "no" forces "no" downstream and rules out `improved`.
    pub fn from_submission(sub: RatingSubmission, submitted_at_ms: u64) -> Result<Rating, EvalError> {
        let invalid = |m: &str| Err(EvalError::Validation(m.to_string()));
        let mut auto_filled = false;
        let q2 = match (sub.q1_intelligible, sub.q2_supported) {
            (YesNo::No, Some(YesNo::Yes)) => return invalid("q1 is no, so q2 must be no"),
            (YesNo::No, None) => {
                auto_filled = true;
                YesNo::No
            }
            (_, Some(a)) => a,
            (YesNo::Yes, None) => return invalid("q2 is required when q1 is yes"),
        };
        let q3 = match (q2, sub.q3_corrected) {
            (YesNo::No, Some(Q3Answer::Improved)) => return invalid("q2 is no, so q3 cannot be improved"),
            (YesNo::No, None) => {
                auto_filled = true;
                Q3Answer::UnrelatedAdded
            }
            (_, Some(a)) => a,
            (YesNo::Yes, None) => return invalid("q3 is required when q2 is yes"),
        };
        Ok(Rating {
            task_id: sub.task_id,
            rater_id: sub.rater_id,
            q1_intelligible: sub.q1_intelligible,
            q2_supported: q2,
            q3_corrected: q3,
            auto_filled,
            submitted_at_ms,
        })
    }

    /// Improved implies supported implies intelligible.
    pub fn is_monotone(&self) -> bool {
        (self.q3_corrected != Q3Answer::Improved || self.q2_supported.is_yes()) && (!self.q2_supported.is_yes() || self.q1_intelligible.is_yes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Question {
    Intelligible,
    Supported,
    Corrected,
}

impl Question {
    pub const ALL: [Question; 3] = [Question::Intelligible, Question::Supported, Question::Corrected];

    pub fn as_str(self) -> &'static str {
        match self {
            Question::Intelligible => "intelligible",
            Question::Supported => "supported",
            Question::Corrected => "corrected",
        }
    }

    /// Category index of this question's answer in `rating`.
    pub fn category(self, rating: &Rating) -> usize {
        match self {
            Question::Intelligible => rating.q1_intelligible as usize,
            Question::Supported => rating.q2_supported as usize,
            Question::Corrected => rating.q3_corrected as usize,
        }
    }

    pub fn n_categories(self) -> usize {
        match self {
            Question::Corrected => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Question {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Question::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| EvalError::Validation(format!("unknown question {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub sample_per_system: usize,
    pub double_ratio: f64,
    pub seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig { sample_per_system: 200, double_ratio: 0.2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub config: BatchConfig,
    pub raters: Vec<String>,
    pub tasks: Vec<EvalTask>,
}

impl Batch {
    pub fn task(&self, id: TaskId) -> Option<&EvalTask> {
        self.tasks.get(id as usize).filter(|t| t.task_id == id)
    }

    pub fn double_count(&self) -> usize {
        self.tasks.iter().filter(|t| t.is_double()).count()
    }

    pub fn system_ids(&self) -> BTreeSet<&str> {
        self.tasks.iter().map(|t| t.system_id.as_str()).collect()
    }
}

/// Sample, interleave and assign tasks. Task ids are positions in the shuffled order.
pub fn create_batch(systems: &[SystemOutputs], config: BatchConfig, raters: &[String]) -> Result<Batch, EvalError> {
    if systems.is_empty() {
        return Err(EvalError::Config("at least one system is required".into()));
    }
    if raters.is_empty() {
        return Err(EvalError::Config("at least one rater is required".into()));
    }
    if !(0.0..=1.0).contains(&config.double_ratio) {
        return Err(EvalError::Config(format!("double_ratio {} outside [0, 1]", config.double_ratio)));
    }
    let distinct: BTreeSet<&String> = raters.iter().collect();
    if distinct.len() != raters.len() {
        return Err(EvalError::Config("rater ids must be distinct".into()));
    }
    if config.double_ratio > 0.0 && raters.len() < 2 {
        return Err(EvalError::Config("double assignment needs at least two raters".into()));
    }
    let mut ordered: Vec<&SystemOutputs> = systems.iter().collect();
    ordered.sort_by(|a, b| a.system_id.cmp(&b.system_id));
    if ordered.windows(2).any(|w| w[0].system_id == w[1].system_id) {
        return Err(EvalError::Config("system ids must be distinct".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool: Vec<(&str, &SystemOutput)> = Vec::new();
    for sys in ordered {
        let n = sys.outputs.len().min(config.sample_per_system);
        let mut picked = rand::seq::index::sample(&mut rng, sys.outputs.len(), n).into_vec();
        picked.sort_unstable();
        pool.extend(picked.into_iter().map(|i| (sys.system_id.as_str(), &sys.outputs[i])));
    }
    pool.shuffle(&mut rng);

    let n_double = (config.double_ratio * pool.len() as f64).round() as usize;
    let doubles: BTreeSet<usize> = rand::seq::index::sample(&mut rng, pool.len(), n_double).into_iter().collect();
    let r = raters.len();
    let tasks = pool
        .into_iter()
        .enumerate()
        .map(|(i, (system_id, out))| {
            let mut assigned = vec![raters[i % r].clone()];
            if doubles.contains(&i) {
                assigned.push(raters[(i + 1) % r].clone());
            }
            EvalTask {
                task_id: i as TaskId,
                instance_id: out.instance_id,
                claim: out.claim.clone(),
                evidence_texts: out.evidence.clone(),
                correction: out.correction.clone(),
                system_id: system_id.to_string(),
                raters: assigned,
            }
        })
        .collect();
    Ok(Batch { config, raters: raters.to_vec(), tasks })
}
