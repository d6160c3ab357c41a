//! Long-answer dataset construction: NQ ingestion with the paragraph filter,
//! normalisation, splits, vocabulary, secondary inputs and corpus statistics.

pub mod error;
pub mod example;
pub mod nq;
pub mod secondary;
pub mod stats;
pub mod text;
pub mod vocab;

pub use error::{DataError, Result};
pub use example::{read_jsonl, split, write_jsonl, Example, ExampleRecord};
pub use nq::{ingest_nq, ingest_reader, IngestReport};
pub use secondary::{attach_secondary, SecondarySource};
pub use stats::{corpus_stats, CorpusStats};
pub use text::{detokenize, first_sentence, sentence_count, tokenize, word_count};
pub use vocab::{build_vocab, Vocab, BOS, EOS, PAD, UNK};
