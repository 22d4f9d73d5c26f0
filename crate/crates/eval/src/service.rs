//! The evaluation service state machine, independent of transport.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::model::{Batch, Rating, RatingSubmission, TaskView};
use crate::stats::{agreement, aggregate, AgreementReport, AggregateReport, ScoringMode};
use crate::store::{RatingMap, Store};
use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

#[derive(Debug)]
pub struct EvalService {
    batch: Batch,
    ratings: RatingMap,
    store: Option<Store>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl EvalService {
    /// In-memory service; nothing is persisted.
    pub fn new(batch: Batch) -> Self {
        EvalService { batch, ratings: RatingMap::new(), store: None }
    }

    /// Persistent service rooted at `dir`, created from `batch` or resumed.
    pub fn with_store(dir: &Path, batch: Batch) -> Result<Self, EvalError> {
        let (store, ratings) = Store::init(dir, &batch)?;
        Ok(EvalService { batch, ratings, store: Some(store) })
    }

    pub fn open(dir: &Path) -> Result<Self, EvalError> {
        let (store, batch, ratings) = Store::open(dir)?;
        Ok(EvalService { batch, ratings, store: Some(store) })
    }

    pub fn batch(&self) -> &Batch {
        &self.batch
    }

    pub fn ratings(&self) -> &RatingMap {
        &self.ratings
    }

    fn check_rater(&self, rater: &str) -> Result<(), EvalError> {
        if self.batch.raters.iter().any(|r| r == rater) {
            Ok(())
        } else {
            Err(EvalError::UnknownRater(rater.to_string()))
        }
    }

    /// First task, in batch order, assigned to `rater` and not yet rated by them.
    pub fn next_task(&self, rater: &str) -> Result<Option<TaskView>, EvalError> {
        self.check_rater(rater)?;
        Ok(self
            .batch
            .tasks
            .iter()
            .find(|t| t.raters.iter().any(|r| r == rater) && !self.ratings.contains_key(&(t.task_id, rater.to_string())))
            .map(|t| t.view()))
    }

    pub fn submit(&mut self, sub: RatingSubmission) -> Result<Rating, EvalError> {
        self.check_rater(&sub.rater_id)?;
        let task = self.batch.task(sub.task_id).ok_or(EvalError::UnknownTask(sub.task_id))?;
        if !task.raters.contains(&sub.rater_id) {
            return Err(EvalError::NotAssigned { task_id: sub.task_id, rater: sub.rater_id });
        }
        let key = (sub.task_id, sub.rater_id.clone());
        if self.ratings.contains_key(&key) {
            return Err(EvalError::Conflict { task_id: sub.task_id, rater: sub.rater_id });
        }
        let rating = Rating::from_submission(sub, now_ms())?;
        if let Some(store) = self.store.as_mut() {
            store.append(&rating)?;
        }
        self.ratings.insert(key, rating.clone());
        Ok(rating)
    }

    /// Ratings submitted against ratings owed, for one rater or for everyone.
    pub fn progress(&self, rater: Option<&str>) -> Result<Progress, EvalError> {
        if let Some(r) = rater {
            self.check_rater(r)?;
        }
        let mine = |id: &str| rater.is_none_or(|r| r == id);
        let total = self.batch.tasks.iter().flat_map(|t| &t.raters).filter(|r| mine(r)).count();
        let done = self.ratings.keys().filter(|(_, r)| mine(r)).count();
        Ok(Progress { done, total })
    }

    pub fn aggregate(&self, mode: ScoringMode) -> AggregateReport {
        aggregate(&self.batch, &self.ratings, mode)
    }

    pub fn agreement(&self) -> AgreementReport {
        agreement(&self.batch, &self.ratings)
    }

    pub fn compact(&mut self) -> Result<(), EvalError> {
        match self.store.as_mut() {
            Some(store) => store.compact(&self.ratings),
            None => Ok(()),
        }
    }
}
