//! Studies: a seeded, model-blind sample of generated questions, the
//! annotators working on it and their ratings.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AnnevalError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateItem {
    pub example_id: String,
    pub answer: String,
    pub question: String,
    pub answer_sentences: usize,
}

/// One model's generations over a shared set of examples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRun {
    pub model: String,
    pub items: Vec<CandidateItem>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_items: usize,
    pub min_annotators: usize,
    pub scale_min: u8,
    pub scale_max: u8,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_items: 100,
            min_annotators: 2,
            scale_min: 1,
            scale_max: 5,
            seed: 1,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_annotators < 2 {
            return Err(AnnevalError::Invalid("at least two annotators per item are required".into()));
        }
        if self.scale_min >= self.scale_max {
            return Err(AnnevalError::Invalid("rating scale needs min < max".into()));
        }
        if self.n_items == 0 {
            return Err(AnnevalError::Invalid("a study needs at least one item".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub item_id: String,
    pub example_id: String,
    pub answer: String,
    pub question: String,
    pub model: String,
    pub answer_sentences: usize,
}

/// What an annotator is shown: no model tag, no example id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindItem {
    pub item_id: String,
    pub answer: String,
    pub question: String,
}

impl From<&EvalItem> for BlindItem {
    fn from(i: &EvalItem) -> Self {
        BlindItem {
            item_id: i.item_id.clone(),
            answer: i.answer.clone(),
            question: i.question.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub annotator: String,
    pub fluency: u8,
    pub correctness: u8,
    /// Unix seconds.
    pub timestamp: u64,
}

/// A rating as submitted, before validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub item_id: String,
    pub annotator: String,
    pub fluency: i64,
    pub correctness: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub id: String,
    pub config: StudyConfig,
    pub items: Vec<EvalItem>,
    pub annotators: Vec<String>,
    pub ratings: Vec<RatingRecord>,
}

/// Samples `config.n_items` example ids uniformly (seeded), shuffles them
/// and deals models round-robin, so every model gets an equal share and
/// neighbouring items usually come from different models.
pub fn create_study(id: &str, runs: &[GenerationRun], config: StudyConfig) -> Result<Study> {
    config.validate()?;
    if runs.is_empty() {
        return Err(AnnevalError::Invalid("no generation runs given".into()));
    }
    let mut tables = Vec::with_capacity(runs.len());
    for run in runs {
        let mut table = BTreeMap::new();
        for item in &run.items {
            if table.insert(item.example_id.as_str(), item).is_some() {
                return Err(AnnevalError::Invalid(format!("run {} repeats example {}", run.model, item.example_id)));
            }
        }
        tables.push(table);
    }
    let ids: BTreeSet<&str> = tables[0].keys().copied().collect();
    for (run, t) in runs.iter().zip(&tables).skip(1) {
        if t.keys().copied().collect::<BTreeSet<_>>() != ids {
            return Err(AnnevalError::Invalid(format!(
                "run {} covers different examples than run {}",
                run.model, runs[0].model
            )));
        }
    }
    if config.n_items > ids.len() {
        return Err(AnnevalError::InsufficientItems {
            wanted: config.n_items,
            available: ids.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pool: Vec<&str> = ids.into_iter().collect();
    let chosen: Vec<&str> = pool.choose_multiple(&mut rng, config.n_items).copied().collect();
    let items = chosen
        .iter()
        .enumerate()
        .map(|(k, ex)| {
            let m = k % runs.len();
            let c = tables[m][ex];
            EvalItem {
                item_id: format!("item-{k:04}"),
                example_id: c.example_id.clone(),
                answer: c.answer.clone(),
                question: c.question.clone(),
                model: runs[m].model.clone(),
                answer_sentences: c.answer_sentences,
            }
        })
        .collect();
    Ok(Study {
        id: id.to_string(),
        config,
        items,
        annotators: Vec::new(),
        ratings: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub rated: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextItem {
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<BlindItem>,
    pub progress: Progress,
}

impl Study {
    pub fn item(&self, id: &str) -> Option<&EvalItem> {
        self.items.iter().find(|i| i.item_id == id)
    }

    pub fn coverage(&self, item_id: &str) -> usize {
        self.ratings.iter().filter(|r| r.item_id == item_id).count()
    }

    pub fn has_annotator(&self, a: &str) -> bool {
        self.annotators.iter().any(|x| x == a)
    }

    /// Adds the annotator if new; returns whether it was added.
    pub fn register(&mut self, annotator: &str) -> Result<bool> {
        if annotator.trim().is_empty() {
            return Err(AnnevalError::Invalid("annotator id must not be empty".into()));
        }
        if self.has_annotator(annotator) {
            return Ok(false);
        }
        self.annotators.push(annotator.to_string());
        Ok(true)
    }

    /// An item `annotator` has not rated, least-covered first (ties by
    /// study order).
    pub fn next_item(&self, annotator: &str) -> Result<NextItem> {
        if !self.has_annotator(annotator) {
            return Err(AnnevalError::UnknownAnnotator(annotator.to_string()));
        }
        let mine: HashSet<&str> = self
            .ratings
            .iter()
            .filter(|r| r.annotator == annotator)
            .map(|r| r.item_id.as_str())
            .collect();
        let progress = Progress {
            rated: mine.len(),
            total: self.items.len(),
        };
        let best = self
            .items
            .iter()
            .filter(|i| !mine.contains(i.item_id.as_str()))
            .min_by_key(|i| self.coverage(&i.item_id));
        Ok(NextItem {
            done: best.is_none(),
            item: best.map(BlindItem::from),
            progress,
        })
    }

    /// Validates a submission against the study without storing it.
    pub fn check_rating(&self, s: &RatingSubmission, timestamp: u64) -> Result<RatingRecord> {
        if self.item(&s.item_id).is_none() {
            return Err(AnnevalError::UnknownItem(s.item_id.clone()));
        }
        if !self.has_annotator(&s.annotator) {
            return Err(AnnevalError::UnknownAnnotator(s.annotator.clone()));
        }
        let (min, max) = (self.config.scale_min, self.config.scale_max);
        let scale = |field: &'static str, value: i64| {
            if value < min as i64 || value > max as i64 {
                Err(AnnevalError::OutOfScale { field, value, min, max })
            } else {
                Ok(value as u8)
            }
        };
        let fluency = scale("fluency", s.fluency)?;
        let correctness = scale("correctness", s.correctness)?;
        if self.ratings.iter().any(|r| r.item_id == s.item_id && r.annotator == s.annotator) {
            return Err(AnnevalError::Duplicate {
                item: s.item_id.clone(),
                annotator: s.annotator.clone(),
            });
        }
        Ok(RatingRecord {
            item_id: s.item_id.clone(),
            annotator: s.annotator.clone(),
            fluency,
            correctness,
            timestamp,
        })
    }

    pub fn record_rating(&mut self, s: &RatingSubmission, timestamp: u64) -> Result<RatingRecord> {
        let rec = self.check_rating(s, timestamp)?;
        self.ratings.push(rec.clone());
        Ok(rec)
    }

    /// Items rated by fewer than `min_annotators` annotators.
    pub fn under_covered(&self) -> Vec<String> {
        self.items
            .iter()
            .filter(|i| self.coverage(&i.item_id) < self.config.min_annotators)
            .map(|i| i.item_id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn runs(n: usize, models: &[&str]) -> Vec<GenerationRun> {
        models
            .iter()
            .map(|m| GenerationRun {
                model: m.to_string(),
                items: (0..n)
                    .map(|i| CandidateItem {
                        example_id: format!("ex{i}"),
                        answer: format!("answer {i} ."),
                        question: format!("generated question {i} ?"),
                        answer_sentences: 1 + i % 7,
                    })
                    .collect(),
            })
            .collect()
    }

    fn cfg(n_items: usize, seed: u64) -> StudyConfig {
        StudyConfig { n_items, seed, ..StudyConfig::default() }
    }

    #[test]
    fn sampling_is_seeded_and_bounded() {
        let r = runs(2136, &["transformer", "lstm"]);
        let a = create_study("s", &r, cfg(100, 4)).unwrap();
        assert_eq!(a.items.len(), 100);
        assert_eq!(a, create_study("s", &r, cfg(100, 4)).unwrap());
        assert_ne!(a.items, create_study("s", &r, cfg(100, 5)).unwrap().items);
        let per_model = a.items.iter().filter(|i| i.model == "lstm").count();
        assert_eq!(per_model, 50);
        let distinct: HashSet<&str> = a.items.iter().map(|i| i.example_id.as_str()).collect();
        assert_eq!(distinct.len(), 100);
        assert!(matches!(
            create_study("s", &runs(10, &["m"]), cfg(11, 1)),
            Err(AnnevalError::InsufficientItems { wanted: 11, available: 10 })
        ));
        let bad = StudyConfig { min_annotators: 1, ..cfg(5, 1) };
        assert!(create_study("s", &r, bad).is_err());
    }

    #[test]
    fn assignment_covers_everything_once_per_annotator() {
        let mut s = create_study("s", &runs(30, &["a", "b"]), cfg(12, 2)).unwrap();
        s.register("x").unwrap();
        s.register("y").unwrap();
        assert!(!s.register("x").unwrap());
        let mut seen: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        loop {
            let mut progressed = false;
            for a in ["x", "y"] {
                let next = s.next_item(a).unwrap();
                if let Some(item) = next.item {
                    let sub = RatingSubmission { item_id: item.item_id.clone(), annotator: a.into(), fluency: 3, correctness: 4 };
                    s.record_rating(&sub, 0).unwrap();
                    seen.entry(a).or_default().push(item.item_id);
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        for a in ["x", "y"] {
            let mut ids = seen[a].clone();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 12);
            assert_eq!(seen[a].len(), 12);
            assert!(s.next_item(a).unwrap().done);
        }
        assert!(s.under_covered().is_empty());
        assert!(matches!(s.next_item("z"), Err(AnnevalError::UnknownAnnotator(_))));
    }

    #[test]
    fn rating_validation() {
        let mut s = create_study("s", &runs(5, &["a"]), cfg(3, 2)).unwrap();
        s.register("x").unwrap();
        let item = s.items[0].item_id.clone();
        let sub = |f, c| RatingSubmission { item_id: item.clone(), annotator: "x".into(), fluency: f, correctness: c };
        assert!(matches!(s.record_rating(&sub(6, 3), 0), Err(AnnevalError::OutOfScale { field: "fluency", .. })));
        assert!(matches!(s.record_rating(&sub(3, 0), 0), Err(AnnevalError::OutOfScale { field: "correctness", .. })));
        let rec = s.record_rating(&sub(4, 3), 7).unwrap();
        assert_eq!((rec.fluency, rec.correctness, rec.timestamp), (4, 3, 7));
        assert_eq!(s.ratings, vec![rec]);
        assert!(matches!(s.record_rating(&sub(4, 3), 8), Err(AnnevalError::Duplicate { .. })));
        let unknown = RatingSubmission { item_id: "nope".into(), ..sub(3, 3) };
        assert!(matches!(s.record_rating(&unknown, 0), Err(AnnevalError::UnknownItem(_))));
        assert_eq!(s.ratings.len(), 1);
    }

    #[test]
    fn blind_items_hide_the_model() {
        let s = create_study("s", &runs(5, &["secret-model"]), cfg(3, 2)).unwrap();
        let json = serde_json::to_string(&BlindItem::from(&s.items[0])).unwrap();
        assert!(!json.contains("secret-model") && !json.contains("example"));
    }
}
