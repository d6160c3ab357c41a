use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::text::{detokenize, sentence_count, word_count};

/// One long answer with its question and optional secondary input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub answer: Vec<String>,
    pub question: Vec<String>,
    pub secondary: Option<Vec<String>>,
    pub answer_sentences: usize,
    pub answer_words: usize,
}

impl Example {
    pub fn new(id: impl Into<String>, answer: Vec<String>, question: Vec<String>) -> Result<Self> {
        let id = id.into();
        if answer.is_empty() {
            return Err(DataError::Contract(format!("example {id}: empty answer")));
        }
        if question.is_empty() {
            return Err(DataError::Contract(format!("example {id}: empty question")));
        }
        Ok(Example {
            answer_sentences: sentence_count(&answer),
            answer_words: word_count(&answer),
            id,
            answer,
            question,
            secondary: None,
        })
    }

    /// Makes the secondary input the model source while keeping the length
    /// counts of the original answer, so length analyses stay comparable.
    pub fn with_secondary_as_source(mut self) -> Result<Self> {
        let secondary = self
            .secondary
            .take()
            .ok_or_else(|| DataError::Contract(format!("example {}: no secondary input to use as source", self.id)))?;
        self.answer = secondary;
        Ok(self)
    }
}

/// On-disk form of an [`Example`]: token lists are stored space-joined.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub answer: String,
    pub question: String,
    #[serde(default)]
    pub secondary: Option<String>,
    pub answer_sentences: usize,
    pub answer_words: usize,
}

impl From<&Example> for ExampleRecord {
    fn from(e: &Example) -> Self {
        ExampleRecord {
            id: e.id.clone(),
            answer: detokenize(&e.answer),
            question: detokenize(&e.question),
            secondary: e.secondary.as_ref().map(|s| detokenize(s)),
            answer_sentences: e.answer_sentences,
            answer_words: e.answer_words,
        }
    }
}

fn split_tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

impl TryFrom<ExampleRecord> for Example {
    type Error = DataError;

    fn try_from(r: ExampleRecord) -> Result<Self> {
        let mut e = Example::new(r.id, split_tokens(&r.answer), split_tokens(&r.question))?;
        e.secondary = r.secondary.as_deref().map(split_tokens);
        e.answer_sentences = r.answer_sentences;
        e.answer_words = r.answer_words;
        Ok(e)
    }
}

pub fn write_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in examples {
        let line = serde_json::to_string(&ExampleRecord::from(e)).expect("record serialises");
        writeln!(w, "{line}").map_err(|e| DataError::io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Example>> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExampleRecord = serde_json::from_str(&line)
            .map_err(|e| DataError::Malformed(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(Example::try_from(record)?);
    }
    Ok(out)
}

/// Seeded shuffle, then the first `floor(n * ratio)` examples form the first
/// part and the remainder the second.
pub fn split<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(DataError::Contract("cannot split an empty dataset".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::Contract(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // the epsilon keeps e.g. 0.7 * 10 from flooring to 6
    let cut = ((items.len() as f64) * ratio + 1e-9).floor() as usize;
    let first = order[..cut].iter().map(|&i| items[i].clone()).collect();
    let second = order[cut..].iter().map(|&i| items[i].clone()).collect();
    Ok((first, second))
}
