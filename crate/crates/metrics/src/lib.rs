//! Corpus BLEU-1..4, METEOR-lite and ROUGE-L over pre-tokenised text, and
//! length-binned reports and run comparisons built on them.

pub mod bins;
pub mod bleu;
pub mod error;
pub mod meteor;
pub mod report;
pub mod rouge;

pub use bins::{
    bin_by_sentences, bin_by_words, bin_results, compare_runs, Bin, BinScheme, BinnedReport, Comparison,
    ComparisonRow, Run, ScoredResult,
};
pub use bleu::{bleu, bleu_stats, BleuStats};
pub use error::{MetricError, Result};
pub use meteor::{meteor_lite, meteor_pair};
pub use report::{evaluate_corpus, evaluate_corpus_with, MetricOptions, MetricReport, COLUMNS, FOOTER};
pub use rouge::{lcs_len, rouge_l, rouge_l_pair, rouge_l_with};
