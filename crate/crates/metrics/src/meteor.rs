//! METEOR without the synonym and paraphrase stages: exact matches, then
//! Snowball-stem matches among the leftovers, scored with the usual
//! recall-weighted harmonic mean and fragmentation penalty.

use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{aligned, order_free_mean, Result};

pub const ALPHA: f64 = 0.9;
pub const BETA: f64 = 3.0;
pub const GAMMA: f64 = 0.5;

/// A one-to-one alignment as `(hyp position, ref position)`, sorted by
/// hypothesis position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
    /// How many pairs came from the stem stage.
    pub stem_matches: usize,
}

impl Alignment {
    /// Runs of matches contiguous and in the same order on both sides.
    pub fn chunks(&self) -> usize {
        let mut chunks = 0;
        let mut last: Option<(usize, usize)> = None;
        for &(h, r) in &self.pairs {
            match last {
                Some((lh, lr)) if h == lh + 1 && r == lr + 1 => {}
                _ => chunks += 1,
            }
            last = Some((h, r));
        }
        chunks
    }
}

/// Per stage, each hypothesis token (left to right) takes the free
/// reference position that continues the previous match if it can, else the
/// leftmost free one.
fn match_stage(hyp: &[String], reference: &[String], used_h: &mut [bool], used_r: &mut [bool], pairs: &mut Vec<(usize, usize)>) -> usize {
    let mut added = 0;
    for i in 0..hyp.len() {
        if used_h[i] {
            continue;
        }
        let prev = pairs.iter().filter(|p| p.0 < i).max_by_key(|p| p.0).map(|p| p.1);
        let free = |j: usize| !used_r[j] && reference[j] == hyp[i];
        let pick = prev
            .map(|p| p + 1)
            .filter(|&j| j < reference.len() && free(j))
            .or_else(|| (0..reference.len()).find(|&j| free(j)));
        if let Some(j) = pick {
            used_h[i] = true;
            used_r[j] = true;
            pairs.push((i, j));
            added += 1;
        }
    }
    added
}

pub fn align(hyp: &[String], reference: &[String], stemmer: &Stemmer) -> Alignment {
    let mut used_h = vec![false; hyp.len()];
    let mut used_r = vec![false; reference.len()];
    let mut pairs = Vec::new();
    match_stage(hyp, reference, &mut used_h, &mut used_r, &mut pairs);
    let stem = |t: &[String]| t.iter().map(|w| stemmer.stem(w).into_owned()).collect::<Vec<_>>();
    let stem_matches = match_stage(&stem(hyp), &stem(reference), &mut used_h, &mut used_r, &mut pairs);
    pairs.sort_unstable();
    Alignment { pairs, stem_matches }
}

/// Pair score in [0, 1]; two empty sequences score 1.
pub fn meteor_pair(hyp: &[String], reference: &[String], stemmer: &Stemmer) -> f64 {
    if hyp.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let a = align(hyp, reference, stemmer);
    let m = a.pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = GAMMA * (a.chunks() as f64 / m as f64).powf(BETA);
    fmean * (1.0 - penalty)
}

pub fn english_stemmer() -> Stemmer {
    Stemmer::create(Algorithm::English)
}

/// Corpus METEOR-lite in percent (mean of pair scores).
pub fn meteor_lite(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64> {
    aligned(hyps, refs)?;
    let stemmer = english_stemmer();
    let scores = hyps.iter().zip(refs).map(|(h, r)| meteor_pair(h, r, &stemmer)).collect();
    Ok(100.0 * order_free_mean(scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_pair_is_one_chunk() {
        let st = english_stemmer();
        for m in 1..8usize {
            let t: Vec<String> = (0..m).map(|i| format!("w{i}")).collect();
            let expected = 1.0 - 0.5 * (1.0 / m as f64).powi(3);
            assert!((meteor_pair(&t, &t, &st) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn stem_stage() {
        let st = english_stemmer();
        let a = align(&toks("he was running"), &toks("he runs"), &st);
        assert_eq!(a.pairs, vec![(0, 0), (2, 1)]);
        assert_eq!(a.stem_matches, 1);
        assert_eq!(a.chunks(), 2);
        assert_eq!(meteor_pair(&toks("x y"), &toks("p q"), &st), 0.0);
    }

    #[test]
    fn hand_fragmentation() {
        // matches: the(0,2) cat(1,3) sat(3,0): chunks = 2, m = 3
        let st = english_stemmer();
        let h = toks("the cat quietly sat");
        let r = toks("sat down the cat");
        let a = align(&h, &r, &st);
        assert_eq!(a.pairs, vec![(0, 2), (1, 3), (3, 0)]);
        assert_eq!(a.chunks(), 2);
        let (p, rc) = (3.0 / 4.0, 3.0 / 4.0);
        let f = p * rc / (0.9 * p + 0.1 * rc);
        let expected = f * (1.0 - 0.5 * (2.0f64 / 3.0).powi(3));
        assert!((meteor_pair(&h, &r, &st) - expected).abs() < 1e-15);
    }

    #[test]
    fn contiguous_continuation_is_preferred() {
        // "a" occurs twice in the reference; the second one continues "b a"
        let st = english_stemmer();
        let a = align(&toks("b a"), &toks("a b a"), &st);
        assert_eq!(a.pairs, vec![(0, 1), (1, 2)]);
        assert_eq!(a.chunks(), 1);
    }
}
