//! Minibatch Adam training on the mean per-token negative log-likelihood.
//!
//! Every example of a batch gets its own graph (evaluated in parallel);
//! gradients are summed in example order, so results do not depend on the
//! number of worker threads.

use std::time::Instant;

use laqg_autodiff::{AdamConfig, AdamState, Graph, ParamStore, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::input::Seq2SeqExample;
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Rescale the global gradient norm to at most this value.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 1,
            clip_norm: None,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Token-weighted mean training NLL (dropout active).
    pub mean_loss: f64,
    pub wall_time_secs: f64,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over the three words
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Summed NLL, token count and per-parameter gradients of `batch`.
/// `dropout_seed = None` evaluates without dropout.
pub fn batch_gradients(
    model: &Model,
    batch: &[&Seq2SeqExample],
    dropout_seed: Option<u64>,
) -> Result<(f64, usize, Vec<Option<Tensor>>)> {
    let store: &ParamStore = &model.store;
    let per_example: Vec<Result<(f64, usize, Vec<Option<Tensor>>)>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let g = Graph::with_params(store);
            let mut g = match dropout_seed {
                Some(s) => g.training(mix(s, i as u64, 0)),
                None => g,
            };
            let (loss, tokens) = model.example_loss(&mut g, ex)?;
            let value = g.value(loss).item()?;
            let grads = g.backward(loss)?.for_params(store);
            Ok((value, tokens, grads))
        })
        .collect();
    let mut total = 0.0;
    let mut tokens = 0;
    let mut sum: Vec<Option<Tensor>> = vec![None; store.len()];
    for r in per_example {
        let (v, t, grads) = r?;
        total += v;
        tokens += t;
        for (acc, g) in sum.iter_mut().zip(grads) {
            match (acc.as_mut(), g) {
                (Some(a), Some(g)) => a.add_assign(&g),
                (None, Some(g)) => *acc = Some(g),
                _ => {}
            }
        }
    }
    Ok((total, tokens, sum))
}

/// Summed NLL and token count over `data` without dropout.
pub fn evaluate_nll(model: &Model, data: &[Seq2SeqExample]) -> Result<(f64, usize)> {
    let results: Vec<Result<(f64, usize)>> = data
        .par_iter()
        .map(|ex| {
            let mut g = Graph::with_params(&model.store);
            let (loss, tokens) = model.example_loss(&mut g, ex)?;
            Ok((g.value(loss).item()?, tokens))
        })
        .collect();
    let mut total = 0.0;
    let mut tokens = 0;
    for r in results {
        let (v, t) = r?;
        total += v;
        tokens += t;
    }
    Ok((total, tokens))
}

/// `exp(NLL / tokens)` over `data`.
pub fn perplexity(model: &Model, data: &[Seq2SeqExample]) -> Result<f64> {
    let (nll, tokens) = evaluate_nll(model, data)?;
    Ok((nll / tokens as f64).exp())
}

fn clip(grads: &mut [Option<Tensor>], max_norm: f64) {
    let norm = grads
        .iter()
        .flatten()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let f = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= f);
        }
    }
}

/// A training run that can be advanced one Adam step at a time.
pub struct Trainer {
    pub config: TrainConfig,
    pub adam: AdamState,
    rng: ChaCha8Rng,
    step: u64,
}

impl Trainer {
    pub fn new(model: &Model, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(ModelError::Config("batch size must be >= 1".into()));
        }
        Ok(Trainer {
            adam: AdamState::for_store(config.adam, &model.store),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            step: 0,
        })
    }

    /// One Adam update on `batch`; returns the batch's summed loss and token count.
    pub fn step(&mut self, model: &mut Model, batch: &[&Seq2SeqExample]) -> Result<(f64, usize)> {
        if batch.is_empty() {
            return Err(ModelError::Contract("empty batch".into()));
        }
        self.step += 1;
        let seed = (model.config.dropout > 0.0).then(|| mix(self.config.seed, self.step, 1));
        let (loss, tokens, mut grads) = batch_gradients(model, batch, seed)?;
        let scale = 1.0 / tokens as f64;
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        if let Some(max) = self.config.clip_norm {
            clip(&mut grads, max);
        }
        self.adam.step_store(&mut model.store, &grads)?;
        Ok((loss, tokens))
    }

    /// One pass over `data` in a seeded random order.
    pub fn epoch(&mut self, model: &mut Model, data: &[Seq2SeqExample]) -> Result<f64> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut loss = 0.0;
        let mut tokens = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&Seq2SeqExample> = chunk.iter().map(|&i| &data[i]).collect();
            let (l, t) = self.step(model, &batch)?;
            loss += l;
            tokens += t;
        }
        Ok(loss / tokens as f64)
    }
}

/// Trains for `config.epochs` epochs, calling `on_epoch` after each; it
/// may stop training early by returning `false`.
pub fn train(
    model: &mut Model,
    data: &[Seq2SeqExample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&Model, &EpochLog) -> bool,
) -> Result<Vec<EpochLog>> {
    if data.is_empty() {
        return Err(ModelError::Contract("cannot train on an empty dataset".into()));
    }
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mean_loss = trainer.epoch(model, data)?;
        let entry = EpochLog {
            epoch,
            mean_loss,
            wall_time_secs: start.elapsed().as_secs_f64(),
        };
        log::debug!("epoch {epoch}: loss {mean_loss:.4}");
        let keep_going = on_epoch(model, &entry);
        log.push(entry);
        if !keep_going {
            break;
        }
    }
    Ok(log)
}
