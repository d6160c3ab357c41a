//! The six model families over one parameter store.
//!
//! LSTM families: stacked (optionally bidirectional) LSTM encoder, stacked
//! LSTM decoder initialised from the encoder's final states, and Luong
//! "general" global attention (`score = h_t · W_a · m_s`) producing
//! `h̃ = tanh(W_c [ctx; h_t])`. The copy variants reuse those energies.
//!
//! Transformer families: post-norm encoder/decoder stacks with embeddings
//! scaled by √d plus positional encodings. The copy variant reads the final
//! decoder layer's cross-attention scores averaged over heads; the
//! multi-source variant adds a second encoder and a second cross-attention
//! per decoder layer.

use laqg_autodiff::{
    causal_mask, global_attention, positional_encoding, Aggregate, Embedding, FeedForward, Graph, Init, LayerNorm,
    Linear, LstmCell, MultiHeadAttention, ParamId, ParamStore, Tensor, Var,
};
use laqg_autodiff::tensor::log_softmax_row;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Combine, Family, ModelConfig, Positional};
use crate::copy::{copy_aggregate_max, copy_aggregate_sum, copy_probs};
use crate::error::{ModelError, Result};
use crate::input::Seq2SeqExample;

#[derive(Clone, Debug)]
enum Output {
    Proj(Linear),
    Tied { bias: ParamId },
}

#[derive(Clone, Debug)]
struct LstmNet {
    src_emb: Embedding,
    tgt_emb: Embedding,
    enc_fwd: Vec<LstmCell>,
    enc_bwd: Vec<LstmCell>,
    dec: Vec<LstmCell>,
    w_a: Linear,
    w_c: Linear,
    out: Output,
}

#[derive(Clone, Debug)]
struct EncoderLayer {
    self_attn: MultiHeadAttention,
    ln1: LayerNorm,
    ffn: FeedForward,
    ln2: LayerNorm,
}

#[derive(Clone, Debug)]
struct DecoderLayer {
    self_attn: MultiHeadAttention,
    ln1: LayerNorm,
    cross: MultiHeadAttention,
    cross2: Option<MultiHeadAttention>,
    ln2: LayerNorm,
    ffn: FeedForward,
    ln3: LayerNorm,
}

#[derive(Clone, Debug)]
enum Positions {
    Sinusoidal(Tensor),
    Learned { src: ParamId, tgt: ParamId },
}

#[derive(Clone, Debug)]
struct TransformerNet {
    src_emb: Embedding,
    tgt_emb: Embedding,
    positions: Positions,
    encoder: Vec<EncoderLayer>,
    encoder2: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    out: Output,
}

#[derive(Clone, Debug)]
enum Net {
    Lstm(LstmNet),
    Transformer(TransformerNet),
}

/// A configuration plus its parameters θ.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    net: Net,
}

/// Encoder outputs detached from any graph.
#[derive(Clone, Debug)]
pub struct Memory {
    /// `[S × d_model]`.
    pub enc: Tensor,
    pub enc2: Option<Tensor>,
    /// Final `(h, c)` per LSTM encoder layer; empty for transformers.
    pub finals: Vec<(Tensor, Tensor)>,
}

impl Memory {
    pub fn src_len(&self) -> usize {
        self.enc.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DecoderState {
    /// `(h, c)` per decoder layer.
    Lstm(Vec<(Tensor, Tensor)>),
    /// Target tokens fed so far; the decoder is re-run over the prefix.
    Transformer(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct DecoderStepOutput {
    pub gen_logits: Vec<f64>,
    /// Pre-normalisation attention energies over source positions (for the
    /// transformer families: final-layer cross-attention, head mean).
    pub attn_logits: Vec<f64>,
    /// Per-head final-layer cross-attention energies (one entry for LSTMs).
    pub head_attn: Vec<Vec<f64>>,
    pub state: DecoderState,
}

pub(crate) struct EncVars {
    mem: Var,
    mem2: Option<Var>,
    finals: Vec<(Var, Var)>,
}

pub(crate) struct DecVars {
    pub logits: Var,
    pub attn: Var,
    pub head_attn: Vec<Var>,
    pub finals: Vec<(Var, Var)>,
}

/// One encoder-attention read for [`multi_source_combine`].
#[derive(Clone, Copy)]
pub struct SourceRead<'a> {
    pub attn: &'a MultiHeadAttention,
    pub memory: Var,
}

#[derive(Clone, Debug)]
pub struct CombineOutput {
    /// Added to the decoder stream by the residual connection.
    pub context: Var,
    /// Head scores of the primary read.
    pub primary_scores: Vec<Var>,
}

/// Parallel: `ctx = A1(x, m1) + A2(x, m2)`. Serial: `c1 = A1(x, m1)`, then
/// `c2 = A2(x + c1, m2)` and `ctx = c1 + c2`, so that `x + ctx` is the
/// residual stream after both reads.
pub fn multi_source_combine(
    g: &mut Graph,
    query: Var,
    primary: SourceRead,
    secondary: SourceRead,
    mode: Combine,
    dropout: f64,
) -> Result<CombineOutput> {
    let d = g.shape(query)[1];
    for m in [primary.memory, secondary.memory] {
        if g.shape(m)[1] != d {
            return Err(ModelError::Contract(format!(
                "memory width {} differs from decoder width {d}",
                g.shape(m)[1]
            )));
        }
    }
    let first = primary.attn.forward(g, query, primary.memory, primary.memory, None, dropout)?;
    let second_query = match mode {
        Combine::Parallel => query,
        Combine::Serial => g.add(query, first.output)?,
    };
    let second = secondary
        .attn
        .forward(g, second_query, secondary.memory, secondary.memory, None, dropout)?;
    Ok(CombineOutput {
        context: g.add(first.output, second.output)?,
        primary_scores: first.head_scores,
    })
}

fn copy_mode(family: Family) -> Option<Aggregate> {
    match family {
        Family::LstmCopy | Family::TransformerCopy => Some(Aggregate::Sum),
        Family::LstmMaxout => Some(Aggregate::Max),
        _ => None,
    }
}

impl Output {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, d: usize, vocab: usize, tied: bool) -> Result<Self> {
        Ok(if tied {
            Output::Tied {
                bias: store.init("out.bias", &[vocab], Init::Zeros, rng)?,
            }
        } else {
            Output::Proj(Linear::new(store, rng, "out", d, vocab, true)?)
        })
    }

    fn forward(&self, g: &mut Graph, h: Var, tgt_emb: &Embedding) -> Result<Var> {
        Ok(match self {
            Output::Proj(l) => l.forward(g, h)?,
            Output::Tied { bias } => {
                let table = g.param(tgt_emb.table);
                let logits = g.matmul_nt(h, table)?;
                let b = g.param(*bias);
                g.add_row(logits, b)?
            }
        })
    }
}

fn zeros_state(g: &mut Graph, hidden: usize) -> (Var, Var) {
    (g.constant(Tensor::zeros(&[1, hidden])), g.constant(Tensor::zeros(&[1, hidden])))
}

/// Runs `cell` over the rows of `x`; returns the hidden rows in position
/// order and the final state.
fn run_lstm(g: &mut Graph, cell: &LstmCell, x: Var, init: (Var, Var), reverse: bool) -> Result<(Var, (Var, Var))> {
    let steps = g.shape(x)[0];
    let proj = cell.project_inputs(g, x)?;
    let (mut h, mut c) = init;
    let mut rows = vec![None; steps];
    let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
    for t in order {
        let xp = if steps == 1 { proj } else { g.slice_rows(proj, t, 1)? };
        (h, c) = cell.step_projected(g, xp, h, c)?;
        rows[t] = Some(h);
    }
    let rows: Vec<Var> = rows.into_iter().map(|r| r.expect("every step visited")).collect();
    let out = if rows.len() == 1 { rows[0] } else { g.concat_rows(&rows)? };
    Ok((out, (h, c)))
}

fn head_mean(g: &mut Graph, heads: &[Var]) -> Result<Var> {
    let mut acc = heads[0];
    for &h in &heads[1..] {
        acc = g.add(acc, h)?;
    }
    if heads.len() == 1 {
        Ok(acc)
    } else {
        Ok(g.scale(acc, 1.0 / heads.len() as f64)?)
    }
}

impl EncoderLayer {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, c: &ModelConfig) -> Result<Self> {
        Ok(EncoderLayer {
            self_attn: MultiHeadAttention::new(store, rng, &format!("{name}.self"), c.d_model, c.heads)?,
            ln1: LayerNorm::new(store, rng, &format!("{name}.ln1"), c.d_model)?,
            ffn: FeedForward::new(store, rng, &format!("{name}.ffn"), c.d_model, c.d_ffn)?,
            ln2: LayerNorm::new(store, rng, &format!("{name}.ln2"), c.d_model)?,
        })
    }

    fn forward(&self, g: &mut Graph, x: Var, p: f64) -> Result<Var> {
        let a = self.self_attn.forward(g, x, x, x, None, p)?.output;
        let a = g.dropout(a, p)?;
        let r = g.add(x, a)?;
        let x = self.ln1.forward(g, r)?;
        let f = self.ffn.forward(g, x, p)?;
        let f = g.dropout(f, p)?;
        let r = g.add(x, f)?;
        Ok(self.ln2.forward(g, r)?)
    }
}

impl DecoderLayer {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, c: &ModelConfig) -> Result<Self> {
        Ok(DecoderLayer {
            self_attn: MultiHeadAttention::new(store, rng, &format!("{name}.self"), c.d_model, c.heads)?,
            ln1: LayerNorm::new(store, rng, &format!("{name}.ln1"), c.d_model)?,
            cross: MultiHeadAttention::new(store, rng, &format!("{name}.cross"), c.d_model, c.heads)?,
            cross2: if c.family.is_multi_source() {
                Some(MultiHeadAttention::new(store, rng, &format!("{name}.cross2"), c.d_model, c.heads)?)
            } else {
                None
            },
            ln2: LayerNorm::new(store, rng, &format!("{name}.ln2"), c.d_model)?,
            ffn: FeedForward::new(store, rng, &format!("{name}.ffn"), c.d_model, c.d_ffn)?,
            ln3: LayerNorm::new(store, rng, &format!("{name}.ln3"), c.d_model)?,
        })
    }
}

/// Deterministically initialised model for `config`.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let rng = &mut rng;
    let net = if c.family.is_lstm() {
        let src_emb = Embedding::new(&mut store, rng, "src_emb", c.vocab_size, c.d_model)?;
        let tgt_emb = Embedding::new(&mut store, rng, "tgt_emb", c.vocab_size, c.d_model)?;
        let enc_hidden = if c.bidirectional { c.d_model / 2 } else { c.d_model };
        let mut enc_fwd = Vec::new();
        let mut enc_bwd = Vec::new();
        for l in 0..c.enc_layers {
            enc_fwd.push(LstmCell::new(&mut store, rng, &format!("enc.{l}.fwd"), c.d_model, enc_hidden)?);
            if c.bidirectional {
                enc_bwd.push(LstmCell::new(&mut store, rng, &format!("enc.{l}.bwd"), c.d_model, enc_hidden)?);
            }
        }
        let dec = (0..c.dec_layers)
            .map(|l| LstmCell::new(&mut store, rng, &format!("dec.{l}"), c.d_model, c.d_model))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let w_a = Linear::new(&mut store, rng, "attn.w_a", c.d_model, c.d_model, false)?;
        let w_c = Linear::new(&mut store, rng, "attn.w_c", 2 * c.d_model, c.d_model, false)?;
        let out = Output::new(&mut store, rng, c.d_model, c.vocab_size, c.tie_embeddings)?;
        Net::Lstm(LstmNet {
            src_emb,
            tgt_emb,
            enc_fwd,
            enc_bwd,
            dec,
            w_a,
            w_c,
            out,
        })
    } else {
        let src_emb = Embedding::new(&mut store, rng, "src_emb", c.vocab_size, c.d_model)?;
        let tgt_emb = Embedding::new(&mut store, rng, "tgt_emb", c.vocab_size, c.d_model)?;
        let positions = match c.positional {
            Positional::Sinusoidal => {
                Positions::Sinusoidal(positional_encoding(c.max_src_len.max(c.max_tgt_len + 1), c.d_model)?)
            }
            Positional::Learned => Positions::Learned {
                src: store.init("pos.src", &[c.max_src_len, c.d_model], Init::XavierUniform, rng)?,
                tgt: store.init("pos.tgt", &[c.max_tgt_len + 1, c.d_model], Init::XavierUniform, rng)?,
            },
        };
        let encoder = (0..c.enc_layers)
            .map(|l| EncoderLayer::new(&mut store, rng, &format!("enc.{l}"), c))
            .collect::<Result<Vec<_>>>()?;
        let encoder2 = if c.family.is_multi_source() {
            (0..c.enc_layers)
                .map(|l| EncoderLayer::new(&mut store, rng, &format!("enc2.{l}"), c))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let decoder = (0..c.dec_layers)
            .map(|l| DecoderLayer::new(&mut store, rng, &format!("dec.{l}"), c))
            .collect::<Result<Vec<_>>>()?;
        let out = Output::new(&mut store, rng, c.d_model, c.vocab_size, c.tie_embeddings)?;
        Net::Transformer(TransformerNet {
            src_emb,
            tgt_emb,
            positions,
            encoder,
            encoder2,
            decoder,
            out,
        })
    };
    Ok(Model {
        config: config.clone(),
        store,
        net,
    })
}

impl TransformerNet {
    fn embed(&self, g: &mut Graph, c: &ModelConfig, ids: &[usize], target: bool) -> Result<Var> {
        let emb = if target { &self.tgt_emb } else { &self.src_emb };
        let x = emb.forward(g, ids)?;
        let x = g.scale(x, (c.d_model as f64).sqrt())?;
        let n = ids.len();
        let pos = match &self.positions {
            Positions::Sinusoidal(table) => {
                let limit = if target { c.max_tgt_len + 1 } else { c.max_src_len };
                if n > limit {
                    return Err(ModelError::Contract(format!("sequence of {n} exceeds the position limit {limit}")));
                }
                let rows = Tensor::matrix(n, c.d_model, table.data()[..n * c.d_model].to_vec())?;
                g.constant(rows)
            }
            Positions::Learned { src, tgt } => {
                let table = g.param(if target { *tgt } else { *src });
                let limit = g.shape(table)[0];
                if n > limit {
                    return Err(ModelError::Contract(format!("sequence of {n} exceeds the position limit {limit}")));
                }
                if n == limit {
                    table
                } else {
                    g.slice_rows(table, 0, n)?
                }
            }
        };
        let x = g.add(x, pos)?;
        Ok(g.dropout(x, c.dropout)?)
    }

    fn encode_stack(&self, g: &mut Graph, c: &ModelConfig, layers: &[EncoderLayer], ids: &[usize]) -> Result<Var> {
        let mut x = self.embed(g, c, ids, false)?;
        for layer in layers {
            x = layer.forward(g, x, c.dropout)?;
        }
        Ok(x)
    }
}

impl Model {
    pub fn family(&self) -> Family {
        self.config.family
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    fn check_sources(&self, src: &[usize], src2: Option<&[usize]>) -> Result<()> {
        if src.is_empty() {
            return Err(ModelError::Contract("empty source sequence".into()));
        }
        match (self.config.family.is_multi_source(), src2) {
            (false, Some(_)) => Err(ModelError::Contract(format!(
                "{} is single-source; a secondary input was given",
                self.config.family
            ))),
            (true, None) => Err(ModelError::Contract("multi-source model needs a secondary input".into())),
            (true, Some(s)) if s.is_empty() => Err(ModelError::Contract("empty secondary sequence".into())),
            _ => Ok(()),
        }
    }

    pub(crate) fn encode_vars(&self, g: &mut Graph, src: &[usize], src2: Option<&[usize]>) -> Result<EncVars> {
        self.check_sources(src, src2)?;
        let c = &self.config;
        let src = &src[..src.len().min(c.max_src_len)];
        match &self.net {
            Net::Lstm(net) => {
                let x = net.src_emb.forward(g, src)?;
                let mut x = g.dropout(x, c.dropout)?;
                let mut finals = Vec::with_capacity(c.enc_layers);
                for l in 0..c.enc_layers {
                    let fwd = &net.enc_fwd[l];
                    let init = zeros_state(g, fwd.hidden);
                    let (rows, (h, cs)) = run_lstm(g, fwd, x, init, false)?;
                    if c.bidirectional {
                        let bwd = &net.enc_bwd[l];
                        let init = zeros_state(g, bwd.hidden);
                        let (brows, (bh, bc)) = run_lstm(g, bwd, x, init, true)?;
                        x = g.concat_cols(&[rows, brows])?;
                        finals.push((g.concat_cols(&[h, bh])?, g.concat_cols(&[cs, bc])?));
                    } else {
                        x = rows;
                        finals.push((h, cs));
                    }
                    if l + 1 < c.enc_layers {
                        x = g.dropout(x, c.dropout)?;
                    }
                }
                Ok(EncVars {
                    mem: x,
                    mem2: None,
                    finals,
                })
            }
            Net::Transformer(net) => {
                let mem = net.encode_stack(g, c, &net.encoder, src)?;
                let mem2 = match src2 {
                    Some(s2) => {
                        let s2 = &s2[..s2.len().min(c.max_src_len)];
                        Some(net.encode_stack(g, c, &net.encoder2, s2)?)
                    }
                    None => None,
                };
                Ok(EncVars {
                    mem,
                    mem2,
                    finals: Vec::new(),
                })
            }
        }
    }

    /// Teacher-forced decoder over `tgt_in`. `init` is the LSTM decoder
    /// state per layer (ignored by transformers).
    pub(crate) fn decode_vars(&self, g: &mut Graph, enc: &EncVars, tgt_in: &[usize], init: &[(Var, Var)]) -> Result<DecVars> {
        let c = &self.config;
        if tgt_in.is_empty() {
            return Err(ModelError::Contract("empty decoder input".into()));
        }
        match &self.net {
            Net::Lstm(net) => {
                let x = net.tgt_emb.forward(g, tgt_in)?;
                let mut x = g.dropout(x, c.dropout)?;
                let mut finals = Vec::with_capacity(c.dec_layers);
                for (l, cell) in net.dec.iter().enumerate() {
                    let (rows, state) = run_lstm(g, cell, x, init[l], false)?;
                    finals.push(state);
                    x = rows;
                    if l + 1 < c.dec_layers {
                        x = g.dropout(x, c.dropout)?;
                    }
                }
                let q = net.w_a.forward(g, x)?;
                let read = global_attention(g, q, enc.mem, enc.mem, None)?;
                let joined = g.concat_cols(&[read.context, x])?;
                let h = net.w_c.forward(g, joined)?;
                let h = g.tanh(h)?;
                let h = g.dropout(h, c.dropout)?;
                let logits = net.out.forward(g, h, &net.tgt_emb)?;
                Ok(DecVars {
                    logits,
                    attn: read.scores,
                    head_attn: vec![read.scores],
                    finals,
                })
            }
            Net::Transformer(net) => {
                let p = c.dropout;
                let mut y = net.embed(g, c, tgt_in, true)?;
                let mask = causal_mask(tgt_in.len());
                let mut last_scores = Vec::new();
                for layer in &net.decoder {
                    let a = layer.self_attn.forward(g, y, y, y, Some(&mask), p)?.output;
                    let a = g.dropout(a, p)?;
                    let r = g.add(y, a)?;
                    y = layer.ln1.forward(g, r)?;
                    let (ctx, scores) = match (&layer.cross2, enc.mem2) {
                        (Some(cross2), Some(mem2)) => {
                            let out = multi_source_combine(
                                g,
                                y,
                                SourceRead { attn: &layer.cross, memory: enc.mem },
                                SourceRead { attn: cross2, memory: mem2 },
                                c.combine,
                                p,
                            )?;
                            (out.context, out.primary_scores)
                        }
                        _ => {
                            let out = layer.cross.forward(g, y, enc.mem, enc.mem, None, p)?;
                            (out.output, out.head_scores)
                        }
                    };
                    let ctx = g.dropout(ctx, p)?;
                    let r = g.add(y, ctx)?;
                    y = layer.ln2.forward(g, r)?;
                    let f = layer.ffn.forward(g, y, p)?;
                    let f = g.dropout(f, p)?;
                    let r = g.add(y, f)?;
                    y = layer.ln3.forward(g, r)?;
                    last_scores = scores;
                }
                let logits = net.out.forward(g, y, &net.tgt_emb)?;
                let attn = head_mean(g, &last_scores)?;
                Ok(DecVars {
                    logits,
                    attn,
                    head_attn: last_scores,
                    finals: Vec::new(),
                })
            }
        }
    }

    fn initial_lstm_vars(&self, finals: &[(Var, Var)]) -> Vec<(Var, Var)> {
        let last = finals.len().saturating_sub(1);
        (0..self.config.dec_layers).map(|l| finals[l.min(last)]).collect()
    }

    /// Summed target NLL of one example and its token count, built into `g`.
    pub fn example_loss(&self, g: &mut Graph, ex: &Seq2SeqExample) -> Result<(Var, usize)> {
        let enc = self.encode_vars(g, &ex.src, ex.src2.as_deref())?;
        let init = if self.config.family.is_lstm() {
            self.initial_lstm_vars(&enc.finals)
        } else {
            Vec::new()
        };
        let dec = self.decode_vars(g, &enc, &ex.tgt_in, &init)?;
        let targets: Vec<Option<usize>> = ex.tgt_out.iter().map(|&t| Some(t)).collect();
        let loss = match copy_mode(self.config.family) {
            Some(mode) => {
                let probs = copy_probs(g, dec.logits, dec.attn, &ex.groups(), mode, ex.ext_size())?;
                g.prob_nll_sum(probs, &targets)?
            }
            None => g.nll_sum(dec.logits, &targets)?,
        };
        Ok((loss, ex.tgt_out.len()))
    }

    /// Runs the encoder without dropout.
    pub fn encode(&self, src: &[usize], src2: Option<&[usize]>) -> Result<Memory> {
        let mut g = Graph::with_params(&self.store);
        let enc = self.encode_vars(&mut g, src, src2)?;
        Ok(Memory {
            enc: g.value(enc.mem).clone(),
            enc2: enc.mem2.map(|m| g.value(m).clone()),
            finals: enc
                .finals
                .iter()
                .map(|&(h, c)| (g.value(h).clone(), g.value(c).clone()))
                .collect(),
        })
    }

    pub fn start_state(&self, memory: &Memory) -> DecoderState {
        if self.config.family.is_lstm() {
            let last = memory.finals.len().saturating_sub(1);
            DecoderState::Lstm((0..self.config.dec_layers).map(|l| memory.finals[l.min(last)].clone()).collect())
        } else {
            DecoderState::Transformer(Vec::new())
        }
    }

    /// Feeds `prev_token` and returns the scores for the next position.
    pub fn decode_step(&self, memory: &Memory, state: &DecoderState, prev_token: usize) -> Result<DecoderStepOutput> {
        if prev_token >= self.config.vocab_size {
            return Err(ModelError::Contract(format!(
                "token {prev_token} outside the embedding vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let mut g = Graph::with_params(&self.store);
        let enc = EncVars {
            mem: g.constant(memory.enc.clone()),
            mem2: memory.enc2.as_ref().map(|m| g.constant(m.clone())),
            finals: Vec::new(),
        };
        let (tgt, init, next_prefix) = match state {
            DecoderState::Lstm(layers) => {
                if layers.len() != self.config.dec_layers {
                    return Err(ModelError::Contract("decoder state does not match the model".into()));
                }
                let init: Vec<(Var, Var)> = layers
                    .iter()
                    .map(|(h, c)| (g.constant(h.clone()), g.constant(c.clone())))
                    .collect();
                (vec![prev_token], init, None)
            }
            DecoderState::Transformer(prefix) => {
                let mut p = prefix.clone();
                p.push(prev_token);
                (p.clone(), Vec::new(), Some(p))
            }
        };
        let dec = self.decode_vars(&mut g, &enc, &tgt, &init)?;
        let last_row = |g: &Graph, v: Var| -> Vec<f64> {
            let t = g.value(v);
            t.row_slice(t.rows() - 1).to_vec()
        };
        let state = match next_prefix {
            Some(p) => DecoderState::Transformer(p),
            None => DecoderState::Lstm(
                dec.finals
                    .iter()
                    .map(|&(h, c)| (g.value(h).clone(), g.value(c).clone()))
                    .collect(),
            ),
        };
        Ok(DecoderStepOutput {
            gen_logits: last_row(&g, dec.logits),
            attn_logits: last_row(&g, dec.attn),
            head_attn: dec.head_attn.iter().map(|&h| last_row(&g, h)).collect(),
            state,
        })
    }

    /// Log-probabilities of the next token: over the extended vocabulary of
    /// `ex` for copy families, over the base vocabulary otherwise.
    pub fn next_log_probs(&self, ex: &Seq2SeqExample, step: &DecoderStepOutput) -> Result<Vec<f64>> {
        let dist = match copy_mode(self.config.family) {
            Some(Aggregate::Sum) => copy_aggregate_sum(&step.gen_logits, &step.attn_logits, &ex.src_ext)?,
            Some(Aggregate::Max) => copy_aggregate_max(&step.gen_logits, &step.attn_logits, &ex.src_ext)?,
            None => return Ok(log_softmax_row(&step.gen_logits)),
        };
        let mut probs = dist.probs;
        probs.resize(ex.ext_size().max(probs.len()), 0.0);
        Ok(probs.into_iter().map(|p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect())
    }

    /// Generation logits `[T × V]` and attention energies `[T × S]` for every
    /// position of `tgt_in` at once, without dropout.
    pub fn teacher_forced(&self, src: &[usize], src2: Option<&[usize]>, tgt_in: &[usize]) -> Result<(Tensor, Tensor)> {
        if let Some(&bad) = tgt_in.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(ModelError::Contract(format!("target token {bad} outside the vocabulary")));
        }
        let mut g = Graph::with_params(&self.store);
        let enc = self.encode_vars(&mut g, src, src2)?;
        let init = if self.config.family.is_lstm() {
            self.initial_lstm_vars(&enc.finals)
        } else {
            Vec::new()
        };
        let dec = self.decode_vars(&mut g, &enc, tgt_in, &init)?;
        Ok((g.value(dec.logits).clone(), g.value(dec.attn).clone()))
    }
}

/// The copy-channel input of the transformer-copy family: final-layer
/// cross-attention energies averaged over heads.
pub fn transformer_copy_scores(model: &Model, step: &DecoderStepOutput) -> Result<Vec<f64>> {
    if model.family() != Family::TransformerCopy {
        return Err(ModelError::Contract(format!(
            "copy scores requested from a {} model",
            model.family()
        )));
    }
    let heads = &step.head_attn;
    let len = heads.first().map(Vec::len).unwrap_or(0);
    let mut out = vec![0.0; len];
    for h in heads {
        for (o, v) in out.iter_mut().zip(h) {
            *o += v;
        }
    }
    if heads.len() > 1 {
        for o in &mut out {
            *o /= heads.len() as f64;
        }
    }
    Ok(out)
}
