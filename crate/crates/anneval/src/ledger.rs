//! Durable study state: one append-only JSONL ledger per study, replayed
//! into memory on open. All writes go through one mutex, so a rating is
//! either on disk and in memory or in neither.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agreement::{agreement, Agreement};
use crate::error::{AnnevalError, Result};
use crate::study::{EvalItem, NextItem, RatingRecord, RatingSubmission, Study, StudyConfig};
use crate::summary::{summarize_by_length, LengthSummary};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LedgerEvent {
    Study { id: String, config: StudyConfig, items: Vec<EvalItem> },
    Annotator { annotator: String },
    Rating(RatingRecord),
}

struct Entry {
    study: Study,
    file: File,
}

impl Entry {
    fn append(&mut self, event: &LedgerEvent) -> Result<()> {
        let mut line = serde_json::to_string(event).map_err(|e| AnnevalError::Invalid(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()?;
        Ok(())
    }
}

pub struct Store {
    dir: PathBuf,
    studies: Mutex<BTreeMap<String, Entry>>,
}

fn valid_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(AnnevalError::Invalid(format!("study id {id:?} must be non-empty [A-Za-z0-9_-]")));
    }
    Ok(())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn ledger_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

/// Rebuilds a study from its ledger lines.
pub fn replay(path: &Path) -> Result<Study> {
    let bad = |message: String| AnnevalError::Ledger { path: path.display().to_string(), message };
    let reader = BufReader::new(File::open(path)?);
    let mut study: Option<Study> = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LedgerEvent = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        match (event, study.as_mut()) {
            (LedgerEvent::Study { id, config, items }, None) => {
                study = Some(Study { id, config, items, annotators: Vec::new(), ratings: Vec::new() });
            }
            (LedgerEvent::Annotator { annotator }, Some(s)) => {
                s.register(&annotator)?;
            }
            (LedgerEvent::Rating(r), Some(s)) => {
                let sub = RatingSubmission {
                    item_id: r.item_id.clone(),
                    annotator: r.annotator.clone(),
                    fluency: r.fluency as i64,
                    correctness: r.correctness as i64,
                };
                s.record_rating(&sub, r.timestamp).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
            }
            (_, _) => return Err(bad(format!("line {}: event out of order", n + 1))),
        }
    }
    study.ok_or_else(|| bad("empty ledger".into()))
}

impl Store {
    /// Opens (creating if needed) a data directory and replays every ledger in it.
    pub fn open(dir: &Path) -> Result<Store> {
        std::fs::create_dir_all(dir)?;
        let mut studies = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let study = replay(&path)?;
            let file = OpenOptions::new().append(true).open(&path)?;
            log::info!("loaded study {} ({} ratings)", study.id, study.ratings.len());
            studies.insert(study.id.clone(), Entry { study, file });
        }
        Ok(Store { dir: dir.to_path_buf(), studies: Mutex::new(studies) })
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Entry) -> Result<T>) -> Result<T> {
        let mut map = self.studies.lock().unwrap_or_else(|p| p.into_inner());
        let entry = map.get_mut(id).ok_or_else(|| AnnevalError::UnknownStudy(id.to_string()))?;
        f(entry)
    }

    pub fn ids(&self) -> Vec<String> {
        self.studies.lock().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect()
    }

    pub fn insert(&self, study: Study) -> Result<()> {
        valid_id(&study.id)?;
        let mut map = self.studies.lock().unwrap_or_else(|p| p.into_inner());
        let path = ledger_path(&self.dir, &study.id);
        if map.contains_key(&study.id) || path.exists() {
            return Err(AnnevalError::StudyExists(study.id));
        }
        let file = OpenOptions::new().append(true).create_new(true).open(&path)?;
        let mut entry = Entry {
            study: Study { annotators: Vec::new(), ratings: Vec::new(), ..study.clone() },
            file,
        };
        entry.append(&LedgerEvent::Study {
            id: study.id.clone(),
            config: study.config,
            items: study.items.clone(),
        })?;
        map.insert(study.id.clone(), entry);
        Ok(())
    }

    pub fn snapshot(&self, id: &str) -> Result<Study> {
        self.with(id, |e| Ok(e.study.clone()))
    }

    /// Registers `annotator`, or a fresh `annotator-N` id when `None`.
    pub fn register(&self, id: &str, annotator: Option<&str>) -> Result<String> {
        self.with(id, |e| {
            let name = match annotator {
                Some(a) => a.to_string(),
                None => (e.study.annotators.len() + 1..)
                    .map(|n| format!("annotator-{n}"))
                    .find(|n| !e.study.has_annotator(n))
                    .unwrap_or_default(),
            };
            if !e.study.has_annotator(&name) {
                let mut next = e.study.clone();
                next.register(&name)?;
                e.append(&LedgerEvent::Annotator { annotator: name.clone() })?;
                e.study = next;
            }
            Ok(name)
        })
    }

    pub fn next_item(&self, id: &str, annotator: &str) -> Result<NextItem> {
        self.with(id, |e| e.study.next_item(annotator))
    }

    pub fn rate(&self, id: &str, sub: &RatingSubmission) -> Result<RatingRecord> {
        self.with(id, |e| {
            let rec = e.study.check_rating(sub, now())?;
            e.append(&LedgerEvent::Rating(rec.clone()))?;
            e.study.ratings.push(rec.clone());
            Ok(rec)
        })
    }

    pub fn agreement(&self, id: &str) -> Result<Agreement> {
        self.with(id, |e| agreement(&e.study))
    }

    pub fn summary(&self, id: &str, cap: usize) -> Result<LengthSummary> {
        self.with(id, |e| Ok(summarize_by_length(&e.study, cap)))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
