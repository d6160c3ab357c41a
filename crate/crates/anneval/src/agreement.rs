//! Krippendorff's alpha with the ordinal metric, computed through the
//! coincidence matrix, plus raw pairwise agreement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AnnevalError, Result};
use crate::study::Study;

/// Ordinal alpha for units of ratings on the integer scale `min..=max`.
/// Units with fewer than two ratings are not pairable and are ignored.
/// When every pairable value is the same (no expected disagreement) the
/// result is 1.
pub fn ordinal_alpha(units: &[Vec<u8>], min: u8, max: u8) -> f64 {
    let k = (max - min) as usize + 1;
    let mut o = vec![vec![0.0f64; k]; k];
    for u in units.iter().filter(|u| u.len() >= 2) {
        let w = 1.0 / (u.len() - 1) as f64;
        for (i, &a) in u.iter().enumerate() {
            for (j, &b) in u.iter().enumerate() {
                if i != j {
                    o[(a - min) as usize][(b - min) as usize] += w;
                }
            }
        }
    }
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    if n <= 1.0 {
        return 1.0;
    }
    let delta2 = |c: usize, d: usize| {
        let (lo, hi) = (c.min(d), c.max(d));
        let s: f64 = n_c[lo..=hi].iter().sum::<f64>() - (n_c[c] + n_c[d]) / 2.0;
        s * s
    };
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            let dd = delta2(c, d);
            observed += o[c][d] * dd;
            expected += n_c[c] * n_c[d] * dd;
        }
    }
    if expected == 0.0 {
        return 1.0;
    }
    1.0 - (n - 1.0) * observed / expected
}

/// Share of annotator pairs on the same unit that gave the same rating.
pub fn mean_pairwise(units: &[Vec<u8>]) -> f64 {
    let (mut same, mut pairs) = (0usize, 0usize);
    for u in units {
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                pairs += 1;
                same += usize::from(u[i] == u[j]);
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        same as f64 / pairs as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAgreement {
    pub fluency: f64,
    pub correctness: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub fluency_alpha: f64,
    pub correctness_alpha: f64,
    pub mean_pairwise: PairwiseAgreement,
    pub ratings: usize,
}

/// `(fluency units, correctness units)`, one unit per item in study order.
pub fn units(study: &Study) -> (Vec<Vec<u8>>, Vec<Vec<u8>>) {
    let mut by_item: BTreeMap<&str, (Vec<u8>, Vec<u8>)> =
        study.items.iter().map(|i| (i.item_id.as_str(), (Vec::new(), Vec::new()))).collect();
    for r in &study.ratings {
        if let Some(e) = by_item.get_mut(r.item_id.as_str()) {
            e.0.push(r.fluency);
            e.1.push(r.correctness);
        }
    }
    by_item.into_values().unzip()
}

pub fn agreement(study: &Study) -> Result<Agreement> {
    let under = study.under_covered();
    if !under.is_empty() {
        return Err(AnnevalError::UnderCovered(under));
    }
    let (f, c) = units(study);
    let (min, max) = (study.config.scale_min, study.config.scale_max);
    Ok(Agreement {
        fluency_alpha: ordinal_alpha(&f, min, max),
        correctness_alpha: ordinal_alpha(&c, min, max),
        mean_pairwise: PairwiseAgreement {
            fluency: mean_pairwise(&f),
            correctness: mean_pairwise(&c),
        },
        ratings: study.ratings.len(),
    })
}
