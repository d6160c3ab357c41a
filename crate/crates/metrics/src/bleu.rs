//! Corpus BLEU: clipped n-gram counts are pooled over the corpus before the
//! geometric mean and brevity penalty.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{aligned, Result};

/// Pooled counts; order `n` lives at index `n - 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub clipped: Vec<u64>,
    /// Matches without clipping, for the `clipped ≤ unclipped` check.
    pub unclipped: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn new(max_n: usize) -> Self {
        BleuStats {
            clipped: vec![0; max_n],
            unclipped: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn add_pair<S: AsRef<str>, T: AsRef<str>>(&mut self, hyp: &[S], reference: &[T]) {
        self.hyp_len += hyp.len() as u64;
        self.ref_len += reference.len() as u64;
        for n in 1..=self.totals.len() {
            let h = ngrams(hyp, n);
            let r = ngrams(reference, n);
            for (g, &c) in &h {
                let rc = r.get(g).copied().unwrap_or(0);
                self.clipped[n - 1] += c.min(rc);
                if rc > 0 {
                    self.unclipped[n - 1] += c;
                }
            }
            self.totals[n - 1] += h.values().sum::<u64>();
        }
    }

    pub fn merge(&mut self, other: &BleuStats) {
        for (a, b) in self.clipped.iter_mut().zip(&other.clipped) {
            *a += b;
        }
        for (a, b) in self.unclipped.iter_mut().zip(&other.unclipped) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Clipped precision of order `n` (1-based); 0 when there are no n-grams.
    pub fn precision(&self, n: usize) -> f64 {
        match self.totals[n - 1] {
            0 => 0.0,
            t => self.clipped[n - 1] as f64 / t as f64,
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    /// BLEU-n in percent. With `smoothing = Some(eps)` a zero-match order
    /// counts as `eps / total` instead of zeroing the score.
    pub fn score(&self, n: usize, smoothing: Option<f64>) -> f64 {
        let mut log_sum = 0.0;
        for k in 1..=n {
            let t = self.totals[k - 1];
            let c = self.clipped[k - 1];
            let p = match (c, smoothing) {
                (0, Some(eps)) if t > 0 => eps / t as f64,
                (0, _) => return 0.0,
                _ => c as f64 / t as f64,
            };
            log_sum += p.ln();
        }
        100.0 * self.brevity_penalty() * (log_sum / n as f64).exp()
    }
}

pub fn bleu_stats<S: AsRef<str>, T: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<T>], max_n: usize) -> Result<BleuStats> {
    aligned(hyps, refs)?;
    let mut stats = BleuStats::new(max_n);
    for (h, r) in hyps.iter().zip(refs) {
        stats.add_pair(h, r);
    }
    Ok(stats)
}

/// `[BLEU-1, …, BLEU-max_n]` in percent, unsmoothed.
pub fn bleu<S: AsRef<str>, T: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<T>], max_n: usize) -> Result<Vec<f64>> {
    let stats = bleu_stats(hyps, refs, max_n)?;
    Ok((1..=max_n).map(|n| stats.score(n, None)).collect())
}
