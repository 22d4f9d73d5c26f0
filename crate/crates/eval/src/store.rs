//! On-disk state: the batch, an append-only ratings journal, and a compacted snapshot.
//!
//! Reload reads the snapshot, then replays the journal; the first rating seen for a
//! (task, rater) wins, so a crash between snapshot and journal truncation is harmless.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::model::{Batch, Rating, TaskId};
use crate::EvalError;

const BATCH: &str = "batch.json";
const JOURNAL: &str = "ratings.jsonl";
const SNAPSHOT: &str = "snapshot.json";

pub type RatingMap = BTreeMap<(TaskId, String), Rating>;

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    journal: File,
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Format(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Store {
    /// Open `dir`, writing `batch` if the store is new. An existing store must hold the same batch.
    pub fn init(dir: &Path, batch: &Batch) -> Result<(Store, RatingMap), EvalError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(BATCH);
        if path.exists() {
            let (store, existing, ratings) = Store::open(dir)?;
            if &existing != batch {
                return Err(EvalError::Config(format!("{} holds a different batch", dir.display())));
            }
            return Ok((store, ratings));
        }
        let json = serde_json::to_vec_pretty(batch).map_err(|e| format_err(&path, e))?;
        write_atomic(&path, &json)?;
        let (store, _, ratings) = Store::open(dir)?;
        Ok((store, ratings))
    }

    pub fn open(dir: &Path) -> Result<(Store, Batch, RatingMap), EvalError> {
        let path = dir.join(BATCH);
        let batch: Batch = serde_json::from_slice(&fs::read(&path)?).map_err(|e| format_err(&path, e))?;
        let mut ratings = RatingMap::new();
        let snap = dir.join(SNAPSHOT);
        if snap.exists() {
            let list: Vec<Rating> = serde_json::from_slice(&fs::read(&snap)?).map_err(|e| format_err(&snap, e))?;
            for r in list {
                ratings.entry((r.task_id, r.rater_id.clone())).or_insert(r);
            }
        }
        let jpath = dir.join(JOURNAL);
        if jpath.exists() {
            for (i, line) in BufReader::new(File::open(&jpath)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Rating>(&line) {
                    Ok(r) => {
                        ratings.entry((r.task_id, r.rater_id.clone())).or_insert(r);
                    }
                    // a torn final write from a crash; everything before it is intact
                    Err(e) => log::warn!("{} line {}: skipping unreadable entry ({e})", jpath.display(), i + 1),
                }
            }
        }
        let journal = OpenOptions::new().create(true).append(true).open(&jpath)?;
        Ok((Store { dir: dir.to_path_buf(), journal }, batch, ratings))
    }

    pub fn append(&mut self, rating: &Rating) -> Result<(), EvalError> {
        let mut line = serde_json::to_vec(rating).map_err(|e| EvalError::Format(e.to_string()))?;
        line.push(b'\n');
        self.journal.write_all(&line)?;
        self.journal.sync_data()?;
        Ok(())
    }

    /// Fold the journal into the snapshot and truncate it.
    pub fn compact(&mut self, ratings: &RatingMap) -> Result<(), EvalError> {
        let list: Vec<&Rating> = ratings.values().collect();
        let json = serde_json::to_vec_pretty(&list).map_err(|e| EvalError::Format(e.to_string()))?;
        write_atomic(&self.dir.join(SNAPSHOT), &json)?;
        self.journal.set_len(0)?;
        self.journal.sync_all()?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
