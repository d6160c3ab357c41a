//! Turning token-level examples into id sequences for a given vocabulary
//! and model configuration.

use laqg_data::{Example, Vocab, BOS, EOS, UNK};

use crate::config::ModelConfig;
use crate::copy::SourceGroups;
use crate::error::{ModelError, Result};

/// One example in id form. Extended ids `>= vocab.len()` index `oov`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seq2SeqExample {
    pub id: String,
    /// Embedding ids of the (truncated) answer; OOV tokens are UNK.
    pub src: Vec<usize>,
    /// Extended ids of the answer; OOV tokens get `vocab.len() + i`.
    pub src_ext: Vec<usize>,
    pub src2: Option<Vec<usize>>,
    /// `BOS q1 … qn` as embedding ids.
    pub tgt_in: Vec<usize>,
    /// `q1 … qn EOS`; extended ids for copy families, base ids otherwise.
    pub tgt_out: Vec<usize>,
    /// Source tokens outside the vocabulary, in first-occurrence order.
    pub oov: Vec<String>,
    pub vocab_size: usize,
}

impl Seq2SeqExample {
    pub fn groups(&self) -> SourceGroups {
        SourceGroups::new(&self.src_ext)
    }

    pub fn ext_size(&self) -> usize {
        self.vocab_size + self.oov.len()
    }

    /// Extended id → embedding id.
    pub fn embed_id(&self, ext: usize) -> usize {
        if ext < self.vocab_size {
            ext
        } else {
            UNK
        }
    }

    /// Extended id → token text.
    pub fn render<'a>(&'a self, vocab: &'a Vocab, ext: usize) -> &'a str {
        if ext < self.vocab_size {
            vocab.token(ext).unwrap_or("<unk>")
        } else {
            self.oov.get(ext - self.vocab_size).map(String::as_str).unwrap_or("<unk>")
        }
    }
}

/// Encodes source-side tokens only (no question needed), for decoding.
pub fn prepare_source(example: &Example, vocab: &Vocab, config: &ModelConfig) -> Result<Seq2SeqExample> {
    if vocab.len() != config.vocab_size {
        return Err(ModelError::Config(format!(
            "vocabulary has {} entries but the model expects {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    let answer = &example.answer[..example.answer.len().min(config.max_src_len)];
    if answer.is_empty() {
        return Err(ModelError::Data(format!("example {}: empty answer", example.id)));
    }
    let mut oov: Vec<String> = Vec::new();
    let mut src = Vec::with_capacity(answer.len());
    let mut src_ext = Vec::with_capacity(answer.len());
    for tok in answer {
        match vocab.id(tok) {
            Some(id) => {
                src.push(id);
                src_ext.push(id);
            }
            None => {
                let i = match oov.iter().position(|o| o == tok) {
                    Some(i) => i,
                    None => {
                        oov.push(tok.clone());
                        oov.len() - 1
                    }
                };
                src.push(UNK);
                src_ext.push(vocab.len() + i);
            }
        }
    }
    let src2 = if config.family.is_multi_source() {
        let secondary = example
            .secondary
            .as_ref()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| ModelError::Data(format!("example {}: multi-source model needs a secondary input", example.id)))?;
        Some(vocab.encode_all(&secondary[..secondary.len().min(config.max_src_len)]))
    } else {
        None
    };
    Ok(Seq2SeqExample {
        id: example.id.clone(),
        src,
        src_ext,
        src2,
        tgt_in: vec![BOS],
        tgt_out: vec![EOS],
        oov,
        vocab_size: vocab.len(),
    })
}

/// Full training form: the question is truncated to `max_tgt_len` tokens
/// before BOS/EOS are added.
pub fn prepare(example: &Example, vocab: &Vocab, config: &ModelConfig) -> Result<Seq2SeqExample> {
    let mut s = prepare_source(example, vocab, config)?;
    let question = &example.question[..example.question.len().min(config.max_tgt_len)];
    if question.is_empty() {
        return Err(ModelError::Data(format!("example {}: empty question", example.id)));
    }
    s.tgt_in = std::iter::once(BOS).chain(question.iter().map(|t| vocab.encode(t))).collect();
    s.tgt_out = question
        .iter()
        .map(|t| match vocab.id(t) {
            Some(id) => id,
            None if config.family.has_copy() => s
                .oov
                .iter()
                .position(|o| o == t)
                .map(|i| s.vocab_size + i)
                .unwrap_or(UNK),
            None => UNK,
        })
        .chain(std::iter::once(EOS))
        .collect();
    Ok(s)
}

pub fn prepare_all(examples: &[Example], vocab: &Vocab, config: &ModelConfig) -> Result<Vec<Seq2SeqExample>> {
    examples.iter().map(|e| prepare(e, vocab, config)).collect()
}
