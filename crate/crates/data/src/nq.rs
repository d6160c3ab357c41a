//! Simplified Natural-Questions ingestion.
//!
//! Each input line is a JSON object with a whitespace-tokenised
//! `document_text`, a `question_text`, and `annotations[].long_answer` spans
//! given as `[start_token, end_token)` offsets into the document tokens
//! (`start_token = -1` when the annotator found no long answer).

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::example::Example;
use crate::text::{detokenize, tokenize};

pub const PARAGRAPH_TAG: &str = "<P>";

#[derive(Debug, Deserialize)]
struct NqRecord {
    #[serde(default)]
    example_id: Option<serde_json::Value>,
    document_text: String,
    question_text: String,
    #[serde(default)]
    annotations: Vec<NqAnnotation>,
}

#[derive(Debug, Deserialize)]
struct NqAnnotation {
    long_answer: Option<NqSpan>,
}

#[derive(Debug, Deserialize)]
struct NqSpan {
    start_token: i64,
    end_token: i64,
}

/// Per-reason counts for everything read.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub retained: usize,
    pub malformed: usize,
    pub no_long_answer: usize,
    pub not_paragraph: usize,
    pub empty_question: usize,
    pub empty_answer: usize,
    /// Retained records carrying more than one long-answer annotation; only
    /// the first was used.
    pub multiple_long_answers: usize,
}

enum Outcome {
    Keep(Example),
    NoLongAnswer,
    NotParagraph,
    EmptyQuestion,
    EmptyAnswer,
}

fn record_id(value: &Option<serde_json::Value>, line_no: usize) -> String {
    match value {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(serde_json::Value::Number(n)) => n.to_string(),
        _ => format!("line-{line_no}"),
    }
}

fn classify(record: &NqRecord, line_no: usize, report: &mut IngestReport) -> Result<Outcome> {
    let spans: Vec<&NqSpan> = record
        .annotations
        .iter()
        .filter_map(|a| a.long_answer.as_ref())
        .filter(|s| s.start_token >= 0 && s.end_token > s.start_token)
        .collect();
    let Some(span) = spans.first() else {
        return Ok(Outcome::NoLongAnswer);
    };
    let doc: Vec<&str> = record.document_text.split_whitespace().collect();
    let (start, end) = (span.start_token as usize, span.end_token as usize);
    if end > doc.len() {
        return Err(DataError::Malformed(format!(
            "line {line_no}: long answer [{start}, {end}) beyond {} document tokens",
            doc.len()
        )));
    }
    if !doc[start].eq_ignore_ascii_case(PARAGRAPH_TAG) {
        return Ok(Outcome::NotParagraph);
    }
    let question = tokenize(&record.question_text);
    if question.is_empty() {
        return Ok(Outcome::EmptyQuestion);
    }
    let answer = tokenize(&doc[start..end].join(" "));
    if answer.is_empty() {
        return Ok(Outcome::EmptyAnswer);
    }
    if spans.len() > 1 {
        report.multiple_long_answers += 1;
    }
    Ok(Outcome::Keep(Example::new(record_id(&record.example_id, line_no), answer, question)?))
}

/// Keeps records whose first long-answer annotation starts with `<P>`.
/// Malformed lines are skipped with a warning and counted.
pub fn ingest_reader(reader: impl BufRead) -> Result<(Vec<Example>, IngestReport)> {
    let mut report = IngestReport::default();
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DataError::Malformed(format!("line {line_no}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        report.records += 1;
        let parsed = serde_json::from_str::<NqRecord>(&line)
            .map_err(|e| DataError::Malformed(format!("line {line_no}: {e}")))
            .and_then(|r| classify(&r, line_no, &mut report));
        match parsed {
            Ok(Outcome::Keep(e)) => examples.push(e),
            Ok(Outcome::NoLongAnswer) => report.no_long_answer += 1,
            Ok(Outcome::NotParagraph) => report.not_paragraph += 1,
            Ok(Outcome::EmptyQuestion) => report.empty_question += 1,
            Ok(Outcome::EmptyAnswer) => report.empty_answer += 1,
            Err(e) => {
                log::warn!("skipping record: {e}");
                report.malformed += 1;
            }
        }
    }
    report.retained = examples.len();
    Ok((examples, report))
}

pub fn ingest_nq(path: &Path) -> Result<(Vec<Example>, IngestReport)> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    ingest_reader(BufReader::new(file))
}

/// Renders an example back into a one-paragraph simplified-NQ record.
pub fn to_nq_line(example: &Example) -> String {
    let doc = format!("{PARAGRAPH_TAG} {} </P>", detokenize(&example.answer));
    let n = doc.split_whitespace().count();
    serde_json::json!({
        "example_id": example.id,
        "document_text": doc,
        "question_text": detokenize(&example.question),
        "annotations": [{"long_answer": {"start_token": 0, "end_token": n}}],
    })
    .to_string()
}
