use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{DataError, Result};
use crate::example::Example;
use crate::text::{first_sentence, tokenize};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SecondarySource {
    FirstSentence,
    /// Tab-separated `id<TAB>summary` lines.
    SummaryFile(PathBuf),
}

/// Parses a summary file into id → summary tokens.
pub fn read_summaries(path: &Path) -> Result<HashMap<String, Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_summaries(&text).map_err(|e| match e {
        DataError::Malformed(m) => DataError::Malformed(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_summaries(text: &str) -> Result<HashMap<String, Vec<String>>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, summary) = line
            .split_once('\t')
            .ok_or_else(|| DataError::Malformed(format!("line {}: expected id<TAB>summary", i + 1)))?;
        out.insert(id.trim().to_string(), tokenize(summary));
    }
    Ok(out)
}

/// Fills `secondary` on every example and returns how many fell back to the
/// first sentence because the summary file had no usable row for them.
pub fn attach_secondary(examples: &mut [Example], source: &SecondarySource) -> Result<usize> {
    let summaries = match source {
        SecondarySource::FirstSentence => None,
        SecondarySource::SummaryFile(path) => Some(read_summaries(path)?),
    };
    Ok(attach_with(examples, summaries.as_ref()))
}

pub fn attach_with(examples: &mut [Example], summaries: Option<&HashMap<String, Vec<String>>>) -> usize {
    let mut fallbacks = 0;
    for e in examples.iter_mut() {
        let found = summaries.and_then(|m| m.get(&e.id)).filter(|s| !s.is_empty());
        e.secondary = Some(match found {
            Some(s) => s.clone(),
            None => {
                if summaries.is_some() {
                    log::warn!("no summary for example {}; using its first sentence", e.id);
                    fallbacks += 1;
                }
                first_sentence(&e.answer).to_vec()
            }
        });
    }
    fallbacks
}
