//! Dense `f64` tensors with reverse-mode differentiation, the Adam optimiser,
//! the neural layers used by the question-generation models, and a small
//! binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod suite;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::{Result, TensorError};
pub use graph::{aggregate_columns, Aggregate, Gradients, Graph, Var};
pub use layers::{
    causal_mask, global_attention, lstm_step, positional_encoding, AttentionOutput, Embedding, FeedForward,
    LayerNorm, Linear, LstmCell, MhaOutput, MultiHeadAttention,
};
pub use params::{Init, ParamId, ParamStore};
pub use tensor::Tensor;
