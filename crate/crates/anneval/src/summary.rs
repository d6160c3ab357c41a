//! Mean ratings per answer sentence count and model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::study::Study;

pub const DEFAULT_CAP: usize = 6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub fluency: Option<f64>,
    pub correctness: Option<f64>,
    pub ratings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// "1" … "5", "6+".
    pub sentences: String,
    /// Rated items in this row.
    pub items: usize,
    /// One cell per model, in `LengthSummary::models` order.
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub models: Vec<String>,
    pub rows: Vec<SummaryRow>,
}

fn row_key(sentences: usize, cap: usize) -> usize {
    sentences.clamp(1, cap) - 1
}

/// Rows `1..cap` (last one `cap+`), each with fluency and correctness means
/// per model pooled over all ratings of the row's items.
pub fn summarize_by_length(study: &Study, cap: usize) -> LengthSummary {
    let cap = cap.max(1);
    let models: Vec<String> = study.items.iter().map(|i| i.model.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let items: BTreeMap<&str, (usize, usize)> = study
        .items
        .iter()
        .map(|i| {
            let m = models.iter().position(|x| *x == i.model).unwrap_or(0);
            (i.item_id.as_str(), (row_key(i.answer_sentences, cap), m))
        })
        .collect();
    let mut sums = vec![vec![(0u64, 0u64, 0usize); models.len()]; cap];
    let mut rated: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); cap];
    for r in &study.ratings {
        if let Some(&(row, m)) = items.get(r.item_id.as_str()) {
            let s = &mut sums[row][m];
            s.0 += r.fluency as u64;
            s.1 += r.correctness as u64;
            s.2 += 1;
            rated[row].insert(r.item_id.as_str());
        }
    }
    let rows = (0..cap)
        .map(|row| SummaryRow {
            sentences: if row + 1 == cap { format!("{cap}+") } else { (row + 1).to_string() },
            items: rated[row].len(),
            cells: sums[row]
                .iter()
                .map(|&(f, c, n)| Cell {
                    fluency: (n > 0).then(|| f as f64 / n as f64),
                    correctness: (n > 0).then(|| c as f64 / n as f64),
                    ratings: n,
                })
                .collect(),
        })
        .collect();
    LengthSummary { models, rows }
}

impl LengthSummary {
    /// `#Sentences` then fluency/correctness per model.
    pub fn table(&self) -> String {
        let mut header = vec!["#Sentences".to_string()];
        for m in &self.models {
            header.push(format!("{m}:fluency"));
            header.push(format!("{m}:correctness"));
        }
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
        let mut lines = vec![header];
        for r in &self.rows {
            let mut l = vec![r.sentences.clone()];
            for c in &r.cells {
                l.push(fmt(c.fluency));
                l.push(fmt(c.correctness));
            }
            lines.push(l);
        }
        let widths: Vec<usize> = (0..lines[0].len()).map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{EvalItem, RatingRecord, StudyConfig};

    fn study(items: Vec<(usize, &str)>, ratings: Vec<(usize, u8, u8)>) -> Study {
        Study {
            id: "s".into(),
            config: StudyConfig::default(),
            items: items
                .iter()
                .enumerate()
                .map(|(k, &(s, m))| EvalItem {
                    item_id: format!("i{k}"),
                    example_id: format!("e{k}"),
                    answer: String::new(),
                    question: String::new(),
                    model: m.into(),
                    answer_sentences: s,
                })
                .collect(),
            annotators: vec!["a".into(), "b".into()],
            ratings: ratings
                .iter()
                .enumerate()
                .map(|(n, &(k, f, c))| RatingRecord {
                    item_id: format!("i{k}"),
                    annotator: if n % 2 == 0 { "a".into() } else { "b".into() },
                    fluency: f,
                    correctness: c,
                    timestamp: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn single_item_mean() {
        let s = study(vec![(2, "m")], vec![(0, 4, 5), (0, 2, 1)]);
        let sum = summarize_by_length(&s, DEFAULT_CAP);
        assert_eq!(sum.rows[1].cells[0].fluency, Some(3.0));
        assert_eq!(sum.rows[1].cells[0].correctness, Some(3.0));
        assert_eq!(sum.rows[1].items, 1);
        assert!(sum.rows[0].cells[0].fluency.is_none());
    }

    #[test]
    fn table_four_shape() {
        let s = study(vec![(1, "transformer"), (9, "lstm")], vec![(0, 5, 5), (1, 1, 2)]);
        let sum = summarize_by_length(&s, DEFAULT_CAP);
        let t = sum.table();
        let lines: Vec<Vec<&str>> = t.lines().map(|l| l.split_whitespace().collect()).collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0].len(), 5);
        assert_eq!(lines.iter().skip(1).map(|l| l[0]).collect::<Vec<_>>(), ["1", "2", "3", "4", "5", "6+"]);
        assert_eq!(lines[6], ["6+", "1.00", "2.00", "-", "-"]);
        assert_eq!(sum.models, ["lstm", "transformer"]);
    }
}
