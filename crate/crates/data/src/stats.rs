use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::example::Example;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub example_count: usize,
    pub mean_sentences: f64,
    pub mean_words: f64,
}

pub fn corpus_stats(examples: &[Example]) -> Result<CorpusStats> {
    if examples.is_empty() {
        return Err(DataError::Contract("corpus statistics of an empty corpus".into()));
    }
    let n = examples.len() as f64;
    Ok(CorpusStats {
        example_count: examples.len(),
        mean_sentences: examples.iter().map(|e| e.answer_sentences as f64).sum::<f64>() / n,
        mean_words: examples.iter().map(|e| e.answer_words as f64).sum::<f64>() / n,
    })
}
