use laqg_data::{Example, Vocab};
use serde::{Deserialize, Serialize};

use crate::decoding::{beam_search, greedy_decode, Hypothesis, StepModel};
use crate::error::Result;
use crate::input::{prepare_source, Seq2SeqExample};
use crate::model::{DecoderState, Memory, Model};

/// A frozen model bound to one encoded source.
pub struct ModelStepper<'a> {
    pub model: &'a Model,
    pub example: &'a Seq2SeqExample,
    pub memory: Memory,
}

impl<'a> ModelStepper<'a> {
    pub fn new(model: &'a Model, example: &'a Seq2SeqExample) -> Result<Self> {
        let memory = model.encode(&example.src, example.src2.as_deref())?;
        Ok(ModelStepper { model, example, memory })
    }
}

impl StepModel for ModelStepper<'_> {
    type State = DecoderState;

    fn start(&self) -> Result<DecoderState> {
        Ok(self.model.start_state(&self.memory))
    }

    fn step(&self, state: &DecoderState, prev: usize) -> Result<(Vec<f64>, DecoderState)> {
        let out = self.model.decode_step(&self.memory, state, self.example.embed_id(prev))?;
        let lp = self.model.next_log_probs(self.example, &out)?;
        Ok((lp, out.state))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeSettings {
    /// 1 = greedy.
    pub beam: usize,
    pub length_penalty: f64,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings {
            beam: crate::decoding::DEFAULT_BEAM,
            length_penalty: 0.0,
        }
    }
}

/// Decodes an id-form example; extended ids are left for the caller to render.
pub fn decode_example(model: &Model, ex: &Seq2SeqExample, settings: DecodeSettings) -> Result<Hypothesis> {
    let stepper = ModelStepper::new(model, ex)?;
    let max_len = model.config.max_tgt_len;
    if settings.beam <= 1 {
        greedy_decode(&stepper, max_len)
    } else {
        beam_search(&stepper, settings.beam, settings.length_penalty, max_len)
    }
}

/// One line of a generation output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub id: String,
    pub question: String,
    pub log_prob: f64,
}

pub fn render(ex: &Seq2SeqExample, vocab: &Vocab, tokens: &[usize]) -> Vec<String> {
    tokens.iter().map(|&t| ex.render(vocab, t).to_string()).collect()
}

/// Question text for one example, copy-extended ids rendered as the source
/// token they point to.
pub fn generate_question(model: &Model, vocab: &Vocab, example: &Example, settings: DecodeSettings) -> Result<Generation> {
    let ex = prepare_source(example, vocab, &model.config)?;
    let hyp = decode_example(model, &ex, settings)?;
    Ok(Generation {
        id: example.id.clone(),
        question: render(&ex, vocab, &hyp.tokens).join(" "),
        log_prob: hyp.log_prob,
    })
}
