//! Length-conditioned reports: results grouped by answer sentence count or
//! by answer word count, each bin scored as its own corpus (corpus BLEU does
//! not decompose into per-example scores).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{MetricError, Result};
use crate::report::{cell, evaluate_corpus_with, render_rows, render_table, MetricOptions, MetricReport, COLUMNS, FOOTER};

pub const DEFAULT_SENTENCE_CAP: usize = 6;
pub const DEFAULT_WORD_WIDTH: usize = 50;
pub const DEFAULT_WORD_BINS: usize = 3;
/// Column of the metric that the word-bin comparison shows by default (BLEU-4).
pub const PRESUMED_WORD_BIN_METRIC: usize = 3;

const BIN_NOTE: &str = "Per-bin BLEU is corpus BLEU over the bin's pairs, not a mean of sentence scores.";

/// One generated question with what binning and scoring need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub id: String,
    pub hypothesis: Vec<String>,
    pub reference: Vec<String>,
    pub answer_words: usize,
    pub answer_sentences: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "kebab-case")]
pub enum BinScheme {
    /// One bin per count `1..cap`, counts `>= cap` in the last; a count of 0
    /// is filed under 1.
    Sentences { cap: usize },
    /// `[0,w), [w,2w), …` with the last of `bins` bins open-ended.
    Words { width: usize, bins: usize },
}

impl BinScheme {
    pub fn sentences() -> Self {
        BinScheme::Sentences { cap: DEFAULT_SENTENCE_CAP }
    }

    pub fn words() -> Self {
        BinScheme::Words {
            width: DEFAULT_WORD_WIDTH,
            bins: DEFAULT_WORD_BINS,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BinScheme::Sentences { cap } if cap == 0 => Err(MetricError::Config("sentence cap must be >= 1".into())),
            BinScheme::Words { width, bins } if width == 0 || bins == 0 => {
                Err(MetricError::Config("word bins need width >= 1 and at least one bin".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BinScheme::Sentences { .. } => "#Sentences",
            BinScheme::Words { .. } => "#Words",
        }
    }

    /// Row keys in display order.
    pub fn keys(&self) -> Vec<String> {
        match *self {
            BinScheme::Sentences { cap } => (1..=cap)
                .map(|k| if k == cap { format!("{k}+") } else { k.to_string() })
                .collect(),
            BinScheme::Words { width, bins } => (0..bins)
                .map(|i| {
                    if i + 1 == bins {
                        format!("{}-", i * width)
                    } else {
                        format!("{}-{}", i * width, (i + 1) * width)
                    }
                })
                .collect(),
        }
    }

    /// Row index of a result.
    pub fn index(&self, r: &ScoredResult) -> usize {
        match *self {
            BinScheme::Sentences { cap } => r.answer_sentences.clamp(1, cap) - 1,
            BinScheme::Words { width, bins } => (r.answer_words / width).min(bins - 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub key: String,
    pub count: usize,
    pub ids: Vec<String>,
    /// `None` for an empty bin.
    pub metrics: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedReport {
    pub scheme: BinScheme,
    pub total: usize,
    pub bins: Vec<Bin>,
    pub note: String,
}

fn group<'a>(results: &'a [ScoredResult], scheme: &BinScheme) -> Vec<Vec<&'a ScoredResult>> {
    let mut groups = vec![Vec::new(); scheme.keys().len()];
    for r in results {
        groups[scheme.index(r)].push(r);
    }
    groups
}

fn score(group: &[&ScoredResult], opts: &MetricOptions) -> Result<Option<MetricReport>> {
    if group.is_empty() {
        return Ok(None);
    }
    let hyps: Vec<Vec<String>> = group.iter().map(|r| r.hypothesis.clone()).collect();
    let refs: Vec<Vec<String>> = group.iter().map(|r| r.reference.clone()).collect();
    evaluate_corpus_with(&hyps, &refs, opts).map(Some)
}

pub fn bin_results(results: &[ScoredResult], scheme: BinScheme, opts: &MetricOptions) -> Result<BinnedReport> {
    scheme.validate()?;
    let bins = scheme
        .keys()
        .into_iter()
        .zip(group(results, &scheme))
        .map(|(key, g)| {
            Ok(Bin {
                key,
                count: g.len(),
                ids: g.iter().map(|r| r.id.clone()).collect(),
                metrics: score(&g, opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BinnedReport {
        scheme,
        total: results.len(),
        bins,
        note: BIN_NOTE.into(),
    })
}

pub fn bin_by_words(results: &[ScoredResult], width: usize) -> Result<BinnedReport> {
    bin_results(results, BinScheme::Words { width, bins: DEFAULT_WORD_BINS }, &MetricOptions::default())
}

pub fn bin_by_sentences(results: &[ScoredResult]) -> Result<BinnedReport> {
    bin_results(results, BinScheme::sentences(), &MetricOptions::default())
}

fn values(m: &Option<MetricReport>) -> Vec<f64> {
    match m {
        Some(m) => m.values().to_vec(),
        None => vec![f64::NAN; 6],
    }
}

fn csv_cell(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.4}")
    }
}

impl BinnedReport {
    /// Every row of the layout, empty bins included.
    pub fn table(&self) -> String {
        let rows: Vec<(String, Vec<String>)> = self
            .bins
            .iter()
            .map(|b| {
                let mut v = vec![b.count.to_string()];
                v.extend(values(&b.metrics).into_iter().map(cell));
                (b.key.clone(), v)
            })
            .collect();
        let mut cols = vec!["n"];
        cols.extend(COLUMNS);
        format!("{}{}\n{FOOTER}\n", render_table(self.scheme.label(), &cols, &rows), self.note)
    }

    pub fn csv(&self) -> String {
        let mut out = format!("bin,count,{}\n", "bleu1,bleu2,bleu3,bleu4,meteor,rouge_l");
        for b in &self.bins {
            let cells: Vec<String> = values(&b.metrics).into_iter().map(csv_cell).collect();
            out.push_str(&format!("{},{},{}\n", b.key, b.count, cells.join(",")));
        }
        out
    }
}

/// A named set of results, e.g. one model's generations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub name: String,
    pub results: Vec<ScoredResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub key: String,
    pub count: usize,
    pub a: Option<MetricReport>,
    pub b: Option<MetricReport>,
    /// `a − b` per metric.
    pub delta: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scheme: BinScheme,
    pub run_a: String,
    pub run_b: String,
    /// One row per bin, then `all`.
    pub rows: Vec<ComparisonRow>,
    pub note: String,
}

fn ids(results: &[ScoredResult]) -> Result<BTreeSet<&str>> {
    let mut set = BTreeSet::new();
    for r in results {
        if !set.insert(r.id.as_str()) {
            return Err(MetricError::DuplicateId(r.id.clone()));
        }
    }
    Ok(set)
}

/// Side-by-side per-bin metrics of two runs over the same example ids. The
/// bins come from run A's length fields.
pub fn compare_runs(a: &Run, b: &Run, scheme: BinScheme, opts: &MetricOptions) -> Result<Comparison> {
    scheme.validate()?;
    let (ia, ib) = (ids(&a.results)?, ids(&b.results)?);
    if ia != ib {
        return Err(MetricError::IdMismatch {
            only_a: ia.difference(&ib).map(|s| s.to_string()).collect(),
            only_b: ib.difference(&ia).map(|s| s.to_string()).collect(),
        });
    }
    let by_id: BTreeMap<&str, &ScoredResult> = b.results.iter().map(|r| (r.id.as_str(), r)).collect();
    let b_aligned: Vec<ScoredResult> = a
        .results
        .iter()
        .map(|r| ScoredResult {
            answer_words: r.answer_words,
            answer_sentences: r.answer_sentences,
            ..by_id[r.id.as_str()].clone()
        })
        .collect();
    let ga = group(&a.results, &scheme);
    let gb = group(&b_aligned, &scheme);
    let mut rows = Vec::new();
    let all_a: Vec<&ScoredResult> = a.results.iter().collect();
    let all_b: Vec<&ScoredResult> = b_aligned.iter().collect();
    let keyed = scheme.keys().into_iter().zip(ga.iter().zip(&gb));
    for (key, (xa, xb)) in keyed.chain(std::iter::once(("all".to_string(), (&all_a, &all_b)))) {
        let (ma, mb) = (score(xa, opts)?, score(xb, opts)?);
        rows.push(ComparisonRow {
            key,
            count: xa.len(),
            delta: ma.zip(mb).map(|(x, y)| x.minus(&y)),
            a: ma,
            b: mb,
        });
    }
    Ok(Comparison {
        scheme,
        run_a: a.name.clone(),
        run_b: b.name.clone(),
        rows,
        note: BIN_NOTE.into(),
    })
}

impl Comparison {
    /// One metric (column index into [`COLUMNS`]) for both runs and the
    /// delta, one row per bin.
    pub fn table(&self, metric: usize) -> String {
        let pick = |m: &Option<MetricReport>| m.map_or(f64::NAN, |m| m.values()[metric]);
        let rows: Vec<(String, Vec<String>)> = self
            .rows
            .iter()
            .map(|r| (r.key.clone(), [&r.a, &r.b, &r.delta].map(|m| cell(pick(m))).to_vec()))
            .collect();
        let delta = format!("delta ({})", COLUMNS[metric]);
        let cols = [self.run_a.as_str(), self.run_b.as_str(), delta.as_str()];
        format!("{}{}\n{FOOTER}\n", render_table(self.scheme.label(), &cols, &rows), self.note)
    }

    /// All six metrics: a block per run and one for the deltas.
    pub fn full_table(&self) -> String {
        let mut out = String::new();
        for (name, get) in [
            (self.run_a.clone(), 0usize),
            (self.run_b.clone(), 1),
            (format!("{} - {}", self.run_a, self.run_b), 2),
        ] {
            let rows: Vec<(String, Vec<f64>)> = self
                .rows
                .iter()
                .map(|r| (r.key.clone(), values([&r.a, &r.b, &r.delta][get])))
                .collect();
            out.push_str(&format!("{name}\n{}\n", render_rows(self.scheme.label(), &rows)));
        }
        out
    }

    pub fn csv(&self) -> String {
        let metrics = ["bleu1", "bleu2", "bleu3", "bleu4", "meteor", "rouge_l"];
        let mut out = String::from("bin,count");
        for side in ["a", "b", "delta"] {
            for m in metrics {
                out.push_str(&format!(",{side}_{m}"));
            }
        }
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![r.key.clone(), r.count.to_string()];
            for m in [&r.a, &r.b, &r.delta] {
                cells.extend(values(m).into_iter().map(csv_cell));
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(id: &str, words: usize, sentences: usize) -> ScoredResult {
        ScoredResult {
            id: id.into(),
            hypothesis: vec!["what".into(), "is".into(), id.into()],
            reference: vec!["what".into(), "is".into(), "it".into()],
            answer_words: words,
            answer_sentences: sentences,
        }
    }

    #[test]
    fn word_bins() {
        let rs = [result("a", 30, 1), result("b", 70, 2), result("c", 200, 9)];
        let rep = bin_by_words(&rs, 50).unwrap();
        let got: Vec<(&str, usize)> = rep.bins.iter().map(|b| (b.key.as_str(), b.count)).collect();
        assert_eq!(got, [("0-50", 1), ("50-100", 1), ("100-", 1)]);
        assert_eq!(BinScheme::Words { width: 50, bins: 1 }.keys(), ["0-"]);
        assert!(bin_results(&rs, BinScheme::Words { width: 0, bins: 3 }, &MetricOptions::default()).is_err());
    }

    #[test]
    fn sentence_bins() {
        let rs = [result("a", 1, 1), result("b", 1, 1), result("c", 1, 3), result("d", 1, 7)];
        let rep = bin_by_sentences(&rs).unwrap();
        let keys: Vec<&str> = rep.bins.iter().map(|b| b.key.as_str()).collect();
        assert_eq!(keys, ["1", "2", "3", "4", "5", "6+"]);
        let counts: Vec<usize> = rep.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, [2, 0, 1, 0, 0, 1]);
        assert!(rep.bins[1].metrics.is_none());
    }

    #[test]
    fn tables_render_every_row() {
        let rs = [result("a", 30, 1), result("b", 70, 2)];
        let t = bin_by_sentences(&rs).unwrap().table();
        let first: Vec<&str> = t.lines().take(7).map(|l| l.split_whitespace().next().unwrap()).collect();
        assert_eq!(first, ["#Sentences", "1", "2", "3", "4", "5", "6+"]);
        let row2: Vec<&str> = t.lines().nth(2).unwrap().split_whitespace().collect();
        assert_eq!(row2[1], "1");
        let row3: Vec<&str> = t.lines().nth(3).unwrap().split_whitespace().collect();
        assert_eq!(row3, ["3", "0", "-", "-", "-", "-", "-", "-"]);
        let csv = bin_by_words(&rs, 50).unwrap().csv();
        assert_eq!(csv.lines().nth(3).unwrap(), "100-,0,,,,,,");
    }

    #[test]
    fn self_comparison_and_id_errors() {
        let run = Run {
            name: "m".into(),
            results: vec![result("a", 30, 1), result("b", 70, 2), result("c", 120, 4)],
        };
        let c = compare_runs(&run, &run, BinScheme::words(), &MetricOptions::default()).unwrap();
        assert_eq!(c.rows.len(), 4);
        assert_eq!(c.rows[3].key, "all");
        for r in &c.rows {
            assert!(r.delta.unwrap().values().iter().all(|&d| d == 0.0));
        }
        let mut other = run.clone();
        other.results[0].id = "z".into();
        match compare_runs(&run, &other, BinScheme::words(), &MetricOptions::default()) {
            Err(MetricError::IdMismatch { only_a, only_b }) => {
                assert_eq!(only_a, ["a"]);
                assert_eq!(only_b, ["z"]);
            }
            other => panic!("{other:?}"),
        }
        let table = c.table(PRESUMED_WORD_BIN_METRIC);
        let keys: Vec<&str> = table.lines().take(5).map(|l| l.split_whitespace().next().unwrap()).collect();
        assert_eq!(keys, ["#Words", "0-50", "50-100", "100-", "all"]);
    }
}
