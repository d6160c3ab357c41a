use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    /// Runs scored on different example sets.
    #[error("runs cover different examples: only in A {only_a:?}, only in B {only_b:?}")]
    IdMismatch { only_a: Vec<String>, only_b: Vec<String> },
    #[error("duplicate example id {0}")]
    DuplicateId(String),
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

pub(crate) fn aligned<H, R>(hyps: &[H], refs: &[R]) -> Result<()> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    Ok(())
}

/// Mean of per-pair scores, summed in sorted order so the result does not
/// depend on corpus order.
pub(crate) fn order_free_mean(mut scores: Vec<f64>) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.sort_by(f64::total_cmp);
    scores.iter().sum::<f64>() / scores.len() as f64
}
