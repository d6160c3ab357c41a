//! ROUGE-L: LCS-based F-measure per pair, averaged over the corpus.

use crate::error::{aligned, order_free_mean, Result};

/// Default β (equal weight on precision and recall).
pub const BETA: f64 = 1.0;
/// The recall-weighted variant of common ROUGE-L implementations.
pub const BETA_RECALL: f64 = 1.2;

/// Longest common subsequence length. References of up to 64 tokens use
/// the bit-parallel row update `V ← (V + (V & M)) | (V & !M)` (M = positions
/// of `b` equal to the current token of `a`); longer ones the plain DP.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let n = b.len();
    if n <= 64 {
        let full = if n == 64 { !0u64 } else { (1u64 << n) - 1 };
        let mut v = full;
        for x in a {
            let m = b.iter().enumerate().fold(0u64, |m, (j, y)| m | (u64::from(x == y) << j));
            v = (v.wrapping_add(v & m) | (v & !m)) & full;
        }
        return n - v.count_ones() as usize;
    }
    let mut row = vec![0usize; n];
    for x in a {
        let (mut diag, mut left) = (0, 0);
        for (y, cell) in b.iter().zip(row.iter_mut()) {
            let up = *cell;
            left = if x == y { diag + 1 } else { up.max(left) };
            *cell = left;
            diag = up;
        }
    }
    row.last().copied().unwrap_or(0)
}

/// F_β from LCS precision and recall, in [0, 1]. Two empty sequences score 1.
pub fn rouge_l_pair<T: PartialEq>(hyp: &[T], reference: &[T], beta: f64) -> f64 {
    if hyp.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let lcs = lcs_len(hyp, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hyp.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Corpus ROUGE-L in percent.
pub fn rouge_l_with<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], beta: f64) -> Result<f64> {
    aligned(hyps, refs)?;
    let scores = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| {
            let h: Vec<&str> = h.iter().map(AsRef::as_ref).collect();
            let r: Vec<&str> = r.iter().map(AsRef::as_ref).collect();
            rouge_l_pair(&h, &r, beta)
        })
        .collect();
    Ok(100.0 * order_free_mean(scores))
}

pub fn rouge_l<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<f64> {
    rouge_l_with(hyps, refs, BETA)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn hand_examples() {
        let (h, r) = (toks("police kill the gunman"), toks("police killed the gunman"));
        assert_eq!(lcs_len(&h, &r), 3);
        assert!((rouge_l(&[h], &[r]).unwrap() - 75.0).abs() < 1e-9);
        assert_eq!(rouge_l(&[toks("a b")], &[toks("a b")]).unwrap(), 100.0);
        assert_eq!(rouge_l(&[toks("a b")], &[toks("c d")]).unwrap(), 0.0);
        assert!(rouge_l(&[toks("a")], &[]).is_err());
    }

    #[test]
    fn both_lcs_paths_agree() {
        let a: Vec<u32> = (0..100).map(|i| (i * 7) % 5).collect();
        let b: Vec<u32> = (0..100).map(|i| (i * 3) % 4).collect();
        // the 64-token prefix of b goes through the bit-parallel path
        for (x, y) in [(&a[..], &b[..64]), (&a[..], &b[..65]), (&b[..64], &a[..])] {
            let naive = {
                let mut t = vec![vec![0usize; y.len() + 1]; x.len() + 1];
                for i in 0..x.len() {
                    for j in 0..y.len() {
                        t[i + 1][j + 1] = if x[i] == y[j] { t[i][j] + 1 } else { t[i][j + 1].max(t[i + 1][j]) };
                    }
                }
                t[x.len()][y.len()]
            };
            assert_eq!(lcs_len(x, y), naive);
        }
    }

    #[test]
    fn recall_weighting() {
        // P = 1, R = 1/2
        let f = rouge_l_pair(&toks("a b"), &toks("a b c d"), BETA_RECALL);
        let b2 = BETA_RECALL * BETA_RECALL;
        assert!((f - (1.0 + b2) * 0.5 / (0.5 + b2)).abs() < 1e-15);
        assert!(f < rouge_l_pair(&toks("a b"), &toks("a b c d"), BETA));
    }
}
