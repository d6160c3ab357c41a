//! Neural building blocks shared by every model family.
//!
//! Each layer owns only [`ParamId`]s; values live in a [`ParamStore`] and
//! are bound into a [`Graph`] on first use.

use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-8;

/// `x · W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = store.init(format!("{name}.weight"), &[d_in, d_out], Init::XavierUniform, rng)?;
        let bias = if bias {
            Some(store.init(format!("{name}.bias"), &[d_out], Init::Zeros, rng)?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, vocab: usize, dim: usize) -> Result<Self> {
        let table = store.init(format!("{name}.table"), &[vocab, dim], Init::XavierUniform, rng)?;
        Ok(Embedding { table })
    }

    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        let t = g.param(self.table);
        g.embedding(t, ids)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.init(format!("{name}.gamma"), &[dim], Init::Ones, rng)?,
            beta: store.init(format!("{name}.beta"), &[dim], Init::Zeros, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (gamma, beta) = (g.param(self.gamma), g.param(self.beta));
        g.layer_norm(x, gamma, beta, LAYER_NORM_EPS)
    }
}

/// LSTM cell weights; gate order along the 4H axis is input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_in: usize, hidden: usize) -> Result<Self> {
        Ok(LstmCell {
            w_input: store.init(format!("{name}.w_input"), &[d_in, 4 * hidden], Init::XavierUniform, rng)?,
            w_hidden: store.init(format!("{name}.w_hidden"), &[hidden, 4 * hidden], Init::XavierUniform, rng)?,
            bias: store.init(format!("{name}.bias"), &[4 * hidden], Init::Zeros, rng)?,
            hidden,
        })
    }

    /// Input projections for a whole sequence at once: `[T × 4H]`.
    pub fn project_inputs(&self, g: &mut Graph, xs: Var) -> Result<Var> {
        let w = g.param(self.w_input);
        let b = g.param(self.bias);
        let y = g.matmul(xs, w)?;
        g.add_row(y, b)
    }

    /// One step given the precomputed input projection row (`[1 × 4H]`).
    pub fn step_projected(&self, g: &mut Graph, x_proj: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let wh = g.param(self.w_hidden);
        let hp = g.matmul(h, wh)?;
        let gates = g.add(x_proj, hp)?;
        lstm_gates(g, gates, c, self.hidden)
    }

    pub fn step(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        lstm_step(g, x, h, c, self)
    }
}

/// `(h', c')` from the standard LSTM gate equations.
pub fn lstm_step(g: &mut Graph, x: Var, h: Var, c: Var, cell: &LstmCell) -> Result<(Var, Var)> {
    let hidden = cell.hidden;
    if g.shape(h) != [1, hidden] || g.shape(c) != [1, hidden] {
        return Err(TensorError::shape("lstm_step", g.shape(h), &[1, hidden]));
    }
    let x_proj = cell.project_inputs(g, x)?;
    cell.step_projected(g, x_proj, h, c)
}

fn lstm_gates(g: &mut Graph, gates: Var, c: Var, hidden: usize) -> Result<(Var, Var)> {
    let i = g.slice_cols(gates, 0, hidden)?;
    let f = g.slice_cols(gates, hidden, hidden)?;
    let cand = g.slice_cols(gates, 2 * hidden, hidden)?;
    let o = g.slice_cols(gates, 3 * hidden, hidden)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let cand = g.tanh(cand)?;
    let o = g.sigmoid(o)?;
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next)?;
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Outputs of a single attention read.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub context: Var,
    pub weights: Var,
    /// Pre-normalisation energies.
    pub scores: Var,
}

/// Dot-product attention of `query` ([Tq × d]) over `keys` ([S × d]),
/// returning the weighted sum of `values` ([S × dv]). `mask` flags
/// excluded key positions (length S) and applies to every query row.
pub fn global_attention(
    g: &mut Graph,
    query: Var,
    keys: Var,
    values: Var,
    mask: Option<&[bool]>,
) -> Result<AttentionOutput> {
    let (sk, sv) = (g.shape(keys)[0], g.shape(values)[0]);
    if sk != sv {
        return Err(TensorError::shape("global_attention", g.shape(keys), g.shape(values)));
    }
    let scores = g.matmul_nt(query, keys)?;
    let weights = match mask {
        Some(m) => {
            if m.len() != sk {
                return Err(TensorError::shape("global_attention", &[m.len()], &[sk]));
            }
            let rows = g.shape(scores)[0];
            let full: Vec<bool> = (0..rows).flat_map(|_| m.iter().copied()).collect();
            g.masked_softmax(scores, &full)?
        }
        None => g.softmax(scores, 1)?,
    };
    let context = g.matmul(weights, values)?;
    Ok(AttentionOutput { context, weights, scores })
}

/// Multi-head attention output with the per-head pre-softmax scores.
#[derive(Clone, Debug)]
pub struct MhaOutput {
    pub output: Var,
    /// One `[Tq × Tk]` score matrix per head, already scaled by 1/√d_head.
    pub head_scores: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q_proj: Linear,
    pub k_proj: Linear,
    pub v_proj: Linear,
    pub out_proj: Linear,
    pub heads: usize,
    pub d_model: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_model: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(TensorError::Config(format!(
                "model dimension {d_model} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            q_proj: Linear::new(store, rng, &format!("{name}.q"), d_model, d_model, true)?,
            k_proj: Linear::new(store, rng, &format!("{name}.k"), d_model, d_model, true)?,
            v_proj: Linear::new(store, rng, &format!("{name}.v"), d_model, d_model, true)?,
            out_proj: Linear::new(store, rng, &format!("{name}.out"), d_model, d_model, true)?,
            heads,
            d_model,
        })
    }

    /// `mask`, when given, is `[Tq × Tk]` row-major with `true` = blocked.
    pub fn forward(
        &self,
        g: &mut Graph,
        query: Var,
        key: Var,
        value: Var,
        mask: Option<&[bool]>,
        dropout: f64,
    ) -> Result<MhaOutput> {
        let q = self.q_proj.forward(g, query)?;
        let k = self.k_proj.forward(g, key)?;
        let v = self.v_proj.forward(g, value)?;
        let d_head = self.d_model / self.heads;
        let scale = 1.0 / (d_head as f64).sqrt();
        let mut contexts = Vec::with_capacity(self.heads);
        let mut head_scores = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * d_head, d_head)?,
                    g.slice_cols(k, h * d_head, d_head)?,
                    g.slice_cols(v, h * d_head, d_head)?,
                )
            };
            let raw = g.matmul_nt(qh, kh)?;
            let scores = g.scale(raw, scale)?;
            let weights = match mask {
                Some(m) => g.masked_softmax(scores, m)?,
                None => g.softmax(scores, 1)?,
            };
            let weights = g.dropout(weights, dropout)?;
            contexts.push(g.matmul(weights, vh)?);
            head_scores.push(scores);
        }
        let joined = if contexts.len() == 1 { contexts[0] } else { g.concat_cols(&contexts)? };
        let output = self.out_proj.forward(g, joined)?;
        Ok(MhaOutput { output, head_scores })
    }
}

/// Position-wise `relu(x·W1 + b1)·W2 + b2`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_model: usize, d_ffn: usize) -> Result<Self> {
        Ok(FeedForward {
            inner: Linear::new(store, rng, &format!("{name}.fc1"), d_model, d_ffn, true)?,
            outer: Linear::new(store, rng, &format!("{name}.fc2"), d_ffn, d_model, true)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, dropout: f64) -> Result<Var> {
        let h = self.inner.forward(g, x)?;
        let h = g.relu(h)?;
        let h = g.dropout(h, dropout)?;
        self.outer.forward(g, h)
    }
}

/// Sinusoidal position table: `PE[p, 2i] = sin(p / 10000^(2i/d))`,
/// `PE[p, 2i+1] = cos(p / 10000^(2i/d))`.
pub fn positional_encoding(max_len: usize, d_model: usize) -> Result<Tensor> {
    if d_model == 0 || d_model % 2 != 0 {
        return Err(TensorError::Config(format!(
            "positional encoding needs an even model dimension, got {d_model}"
        )));
    }
    if max_len == 0 {
        return Err(TensorError::Config("positional encoding needs max_len >= 1".into()));
    }
    let mut data = vec![0.0; max_len * d_model];
    for pos in 0..max_len {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            data[pos * d_model + 2 * i] = angle.sin();
            data[pos * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::matrix(max_len, d_model, data)
}

/// `[n × n]` mask blocking attention to later positions.
pub fn causal_mask(n: usize) -> Vec<bool> {
    (0..n * n).map(|idx| idx % n > idx / n).collect()
}
