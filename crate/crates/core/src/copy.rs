//! Copy channel: per-word aggregation of attention energies, the joint
//! softmax with the generation logits, and the merge onto the extended
//! vocabulary.

use laqg_autodiff::{aggregate_columns, Aggregate, Graph, Var};

use crate::error::{ModelError, Result};

/// Distinct source words of one example, in first-occurrence order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceGroups {
    /// Group index of every source position.
    pub groups: Vec<usize>,
    /// Extended-vocabulary id of every group.
    pub words: Vec<usize>,
}

impl SourceGroups {
    pub fn new(src_ids: &[usize]) -> Self {
        let mut words: Vec<usize> = Vec::new();
        let groups = src_ids
            .iter()
            .map(|&id| match words.iter().position(|&w| w == id) {
                Some(g) => g,
                None => {
                    words.push(id);
                    words.len() - 1
                }
            })
            .collect();
        SourceGroups { groups, words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Column map of `[gen ‖ copy]` onto an extended vocabulary whose first
    /// `vocab` ids are the generation channel.
    pub fn column_map(&self, vocab: usize) -> Vec<usize> {
        (0..vocab).chain(self.words.iter().copied()).collect()
    }
}

/// Result of a copy-enabled output layer for one decoder step.
#[derive(Clone, Debug, PartialEq)]
pub struct CopyDistribution {
    /// Aggregated energy per distinct source word, aligned with `words`.
    pub copy_scores: Vec<f64>,
    pub words: Vec<usize>,
    /// Probabilities over the extended vocabulary.
    pub probs: Vec<f64>,
}

impl CopyDistribution {
    pub fn copy_score(&self, word: usize) -> Option<f64> {
        self.words.iter().position(|&w| w == word).map(|i| self.copy_scores[i])
    }
}

fn copy_distribution(gen_logits: &[f64], attn_logits: &[f64], src_ids: &[usize], mode: Aggregate) -> Result<CopyDistribution> {
    if attn_logits.len() != src_ids.len() {
        return Err(ModelError::Contract(format!(
            "{} attention scores for {} source tokens",
            attn_logits.len(),
            src_ids.len()
        )));
    }
    if gen_logits.is_empty() {
        return Err(ModelError::Contract("empty generation logits".into()));
    }
    let sg = SourceGroups::new(src_ids);
    let (copy_scores, _) = aggregate_columns(attn_logits, 1, src_ids.len(), &sg.groups, sg.len(), mode);
    let ext = sg.words.iter().map(|&w| w + 1).max().unwrap_or(0).max(gen_logits.len());

    let joint: Vec<f64> = gen_logits.iter().chain(&copy_scores).copied().collect();
    let max = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = joint.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut probs = vec![0.0; ext];
    for (col, e) in sg.column_map(gen_logits.len()).into_iter().zip(&exps) {
        probs[col] += e / z;
    }
    Ok(CopyDistribution {
        copy_scores,
        words: sg.words,
        probs,
    })
}

/// Copy score of a word = sum of the energies at its source positions.
pub fn copy_aggregate_sum(gen_logits: &[f64], attn_logits: &[f64], src_ids: &[usize]) -> Result<CopyDistribution> {
    copy_distribution(gen_logits, attn_logits, src_ids, Aggregate::Sum)
}

/// Copy score of a word = max of the energies at its source positions.
pub fn copy_aggregate_max(gen_logits: &[f64], attn_logits: &[f64], src_ids: &[usize]) -> Result<CopyDistribution> {
    copy_distribution(gen_logits, attn_logits, src_ids, Aggregate::Max)
}

/// Differentiable version for teacher-forced training: `gen` is `[T × V]`,
/// `attn` is `[T × S]`; returns probabilities `[T × ext]`.
pub fn copy_probs(g: &mut Graph, gen: Var, attn: Var, sg: &SourceGroups, mode: Aggregate, ext: usize) -> Result<Var> {
    let vocab = g.shape(gen)[1];
    let agg = g.scatter_aggregate(attn, &sg.groups, sg.len(), mode)?;
    let joint = g.concat_cols(&[gen, agg])?;
    let p = g.softmax(joint, 1)?;
    Ok(g.scatter_columns(p, &sg.column_map(vocab), ext)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use laqg_autodiff::Tensor;
    use proptest::prelude::*;

    #[test]
    fn hand_aggregates() {
        let gen = [0.0, 0.5, -1.0];
        let s = copy_aggregate_sum(&gen, &[1.0, 2.0, 1.0], &[7, 9, 7]).unwrap();
        assert_eq!(s.copy_score(7), Some(2.0));
        assert_eq!(s.copy_score(9), Some(2.0));
        let m = copy_aggregate_max(&gen, &[1.0, 2.0, 1.0], &[7, 9, 7]).unwrap();
        assert_eq!(m.copy_score(7), Some(1.0));
        assert_eq!(m.copy_score(9), Some(2.0));
        assert_eq!(s.probs.len(), 10);
        assert!(copy_aggregate_sum(&gen, &[1.0], &[7, 9]).is_err());
    }

    #[test]
    fn overlapping_word_probabilities_add() {
        // word 1 is both generable and copyable
        let d = copy_aggregate_sum(&[0.0, 0.0], &[0.0], &[1]).unwrap();
        assert!((d.probs[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.probs[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn max_ignores_repetition() {
        let a = copy_aggregate_max(&[0.1, 0.2], &[0.7, -0.3], &[5, 6]).unwrap();
        let b = copy_aggregate_max(&[0.1, 0.2], &[0.7, -0.3, 0.7], &[5, 6, 5]).unwrap();
        assert_eq!(a.copy_score(5), b.copy_score(5));
        assert_eq!(a.probs, b.probs);
    }

    #[test]
    fn graph_version_matches_pure_version() {
        let gen = vec![0.3, -0.2, 1.1, 0.0];
        let attn = vec![0.5, 1.5, -0.5, 0.5];
        let src = vec![2, 6, 4, 2];
        for (mode, pure) in [
            (Aggregate::Sum, copy_aggregate_sum(&gen, &attn, &src).unwrap()),
            (Aggregate::Max, copy_aggregate_max(&gen, &attn, &src).unwrap()),
        ] {
            let mut g = Graph::new();
            let gv = g.constant(Tensor::row(gen.clone()));
            let av = g.constant(Tensor::row(attn.clone()));
            let p = copy_probs(&mut g, gv, av, &SourceGroups::new(&src), mode, 7).unwrap();
            let got = g.value(p).data();
            for (a, b) in got.iter().zip(&pure.probs) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn sum_equals_max_on_distinct_sources(
            gen in proptest::collection::vec(-5.0f64..5.0, 1..12),
            picks in proptest::collection::btree_set(0usize..40, 1..10),
            seed_scores in proptest::collection::vec(-5.0f64..5.0, 10),
        ) {
            let src: Vec<usize> = picks.into_iter().collect();
            let attn = &seed_scores[..src.len()];
            let s = copy_aggregate_sum(&gen, attn, &src).unwrap();
            let m = copy_aggregate_max(&gen, attn, &src).unwrap();
            prop_assert_eq!(&s, &m);
            prop_assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(s.probs.iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn distributions_normalise_with_duplicates(
            gen in proptest::collection::vec(-30.0f64..30.0, 1..12),
            src in proptest::collection::vec(0usize..15, 1..12),
            scale in 0.1f64..30.0,
        ) {
            let attn: Vec<f64> = src.iter().enumerate().map(|(i, &w)| ((i * 7 + w) % 5) as f64 * scale - scale).collect();
            for d in [copy_aggregate_sum(&gen, &attn, &src).unwrap(), copy_aggregate_max(&gen, &attn, &src).unwrap()] {
                prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
