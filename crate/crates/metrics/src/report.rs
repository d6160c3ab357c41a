use serde::{Deserialize, Serialize};

use crate::bleu::bleu_stats;
use crate::error::{aligned, Result};
use crate::meteor::meteor_lite;
use crate::rouge::{rouge_l_with, BETA};

pub const COLUMNS: [&str; 6] = ["BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR", "ROUGE-L"];

/// Printed under every text report.
pub const FOOTER: &str = "METEOR here is exact+stem matching only (no synonym/paraphrase stages); \
absolute values are not comparable with full METEOR.";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Epsilon smoothing of zero-match BLEU orders; `None` = standard BLEU.
    pub bleu_smoothing: Option<f64>,
    pub rouge_beta: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            bleu_smoothing: None,
            rouge_beta: BETA,
        }
    }
}

/// All scores in percent, serialized in column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
}

impl MetricReport {
    pub fn values(&self) -> [f64; 6] {
        [self.bleu1, self.bleu2, self.bleu3, self.bleu4, self.meteor, self.rouge_l]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        MetricReport {
            bleu1: v[0],
            bleu2: v[1],
            bleu3: v[2],
            bleu4: v[3],
            meteor: v[4],
            rouge_l: v[5],
        }
    }

    /// Column-wise `self − other`.
    pub fn minus(&self, other: &MetricReport) -> MetricReport {
        let (a, b) = (self.values(), other.values());
        MetricReport::from_values(std::array::from_fn(|i| a[i] - b[i]))
    }

    pub fn table(&self) -> String {
        render_rows("", &[(String::new(), self.values().to_vec())])
    }
}

pub fn evaluate_corpus(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<MetricReport> {
    evaluate_corpus_with(hyps, refs, &MetricOptions::default())
}

pub fn evaluate_corpus_with(hyps: &[Vec<String>], refs: &[Vec<String>], opts: &MetricOptions) -> Result<MetricReport> {
    aligned(hyps, refs)?;
    let stats = bleu_stats(hyps, refs, 4)?;
    let b = |n| stats.score(n, opts.bleu_smoothing);
    Ok(MetricReport {
        bleu1: b(1),
        bleu2: b(2),
        bleu3: b(3),
        bleu4: b(4),
        meteor: meteor_lite(hyps, refs)?,
        rouge_l: rouge_l_with(hyps, refs, opts.rouge_beta)?,
    })
}

pub(crate) fn cell(x: f64) -> String {
    if x.is_nan() {
        "-".to_string()
    } else {
        format!("{x:.2}")
    }
}

/// An aligned text table under the six metric columns.
pub(crate) fn render_rows(label: &str, rows: &[(String, Vec<f64>)]) -> String {
    let cells: Vec<(String, Vec<String>)> = rows
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(|&x| cell(x)).collect()))
        .collect();
    render_table(label, &COLUMNS, &cells)
}

/// Left-aligned key column, right-aligned value columns.
pub(crate) fn render_table(label: &str, columns: &[&str], rows: &[(String, Vec<String>)]) -> String {
    let mut lines: Vec<Vec<String>> = vec![std::iter::once(label.to_string())
        .chain(columns.iter().map(|c| c.to_string()))
        .collect()];
    lines.extend(rows.iter().map(|(k, v)| std::iter::once(k.clone()).chain(v.iter().cloned()).collect()));
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|i| lines.iter().map(|r| r.get(i).map_or(0, String::len)).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &lines {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identity_corpus() {
        let c = vec![toks("where was marie curie born ?"), toks("who wrote it ?")];
        let r = evaluate_corpus(&c, &c).unwrap();
        for v in &r.values()[..4] {
            assert!((v - 100.0).abs() < 1e-9);
        }
        assert_eq!(r.rouge_l, 100.0);
        let m = |n: f64| 1.0 - 0.5 / n.powi(3);
        assert!((r.meteor - 100.0 * (m(6.0) + m(4.0)) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn json_columns_in_order() {
        let r = MetricReport::from_values([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"bleu1":1.0,"bleu2":2.0,"bleu3":3.0,"bleu4":4.0,"meteor":5.0,"rouge_l":6.0}"#
        );
        let t = r.table();
        let header: Vec<&str> = t.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(header, COLUMNS);
        assert_eq!(t.lines().nth(1).unwrap().split_whitespace().collect::<Vec<_>>(), ["1.00", "2.00", "3.00", "4.00", "5.00", "6.00"]);
    }
}
