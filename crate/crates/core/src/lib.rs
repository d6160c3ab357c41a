//! Question-generation models: the LSTM attention, copy and maxout-pointer
//! baselines, the transformer with and without copying, the two-source
//! transformer, their training loop, and greedy/beam decoding.

pub mod config;
pub mod copy;
pub mod decoding;
pub mod error;
pub mod generate;
pub mod input;
pub mod model;
pub mod persist;
pub mod synthetic;
pub mod train;

pub use config::{Combine, Family, ModelConfig, Positional};
pub use copy::{copy_aggregate_max, copy_aggregate_sum, CopyDistribution, SourceGroups};
pub use decoding::{beam_search, enumerate_sequences, greedy_decode, Hypothesis, StepModel, TableModel};
pub use error::{ModelError, Result};
pub use generate::{decode_example, generate_question, DecodeSettings, Generation, ModelStepper};
pub use input::{prepare, prepare_all, prepare_source, Seq2SeqExample};
pub use model::{
    build_model, multi_source_combine, transformer_copy_scores, CombineOutput, DecoderState, DecoderStepOutput,
    Memory, Model, SourceRead,
};
pub use persist::{load_model, save_model};
pub use train::{batch_gradients, evaluate_nll, perplexity, train, EpochLog, TrainConfig, Trainer};
