//! `train`: resolve the configuration, fit, and write checkpoint + loss log.

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use laqg_autodiff::AdamConfig;
use laqg_core::{build_model, perplexity, prepare_all, save_model, train, ModelConfig, TrainConfig};
use laqg_data::{read_jsonl, Vocab};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::TrainArgs;
use crate::commands::prepare::VOCAB_FILE;
use crate::error::{mismatch, usage};
use crate::files::{ensure_dir, write_jsonl};
use crate::manifest::RunManifest;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.jsonl";

/// One line of the loss log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossLine {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_perplexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_perplexity: Option<f64>,
}

/// Prepared data directory: verified manifest plus its vocabulary, checked
/// against the recorded hash.
pub fn open_data(dir: &Path) -> anyhow::Result<(RunManifest, Vocab)> {
    let m = RunManifest::load_verified(dir, "prepare-data")?;
    let vocab = Vocab::load(&dir.join(VOCAB_FILE))?;
    let hash = vocab.hash();
    if m.vocab_hash.as_deref() != Some(hash.as_str()) {
        return Err(mismatch(format!(
            "vocabulary in {} hashes to {} but its manifest records {}",
            dir.display(),
            &hash[..12],
            m.vocab_hash.as_deref().unwrap_or("nothing")
        )));
    }
    Ok((m, vocab))
}

pub fn model_config(args: &TrainArgs, vocab_size: usize) -> anyhow::Result<ModelConfig> {
    let mut c = match &args.arch {
        Some(name) => {
            if args.family.is_lstm() {
                return Err(usage(format!("preset {name} describes a transformer; --family is {}", args.family)));
            }
            ModelConfig::preset(name)?
        }
        None => ModelConfig::default(),
    };
    c.family = args.family;
    c.vocab_size = vocab_size;
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { c.$f = v; } )* };
    }
    set!(enc_layers, dec_layers, heads, d_model, d_ffn, dropout, max_src_len, max_tgt_len, combine, positional);
    c.bidirectional |= args.bidirectional;
    c.tie_embeddings |= args.tie_embeddings;
    c.validate()?;
    Ok(c)
}

pub fn run(args: &TrainArgs) -> anyhow::Result<()> {
    if args.epochs == 0 || args.batch_size == 0 || args.eval_every == 0 {
        return Err(usage("--epochs, --batch-size and --eval-every must be >= 1"));
    }
    if !(args.lr > 0.0) {
        return Err(usage(format!("--lr must be positive, got {}", args.lr)));
    }
    let (data_manifest, vocab) = open_data(&args.data)?;
    let config = model_config(args, vocab.len())?;
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        adam: AdamConfig { lr: args.lr, ..AdamConfig::default() },
        seed: args.seed,
        clip_norm: args.clip_norm,
    };

    let mut manifest = RunManifest::new("train");
    for f in ["train.jsonl", "valid.jsonl", VOCAB_FILE] {
        manifest.input(f.trim_end_matches(".jsonl").trim_end_matches(".txt"), &args.data.join(f))?;
    }
    manifest.upstream.insert("data".into(), data_manifest.run_id.clone());
    manifest.seeds.insert("train".into(), args.seed);
    manifest.vocab_hash = data_manifest.vocab_hash.clone();
    manifest.model = Some(config.clone());
    manifest.training = Some(train_config.clone());
    manifest.settings = json!({ "eval_every": args.eval_every, "stop_perplexity": args.stop_perplexity });
    let run_id = manifest.seal().to_string();
    ensure_dir(&args.out)?;
    if args.dry_run {
        manifest.finish(&args.out, &[])?;
        println!("{run_id}: {}", serde_json::to_string(&config)?);
        return Ok(());
    }

    let train_set = prepare_all(&read_jsonl(&args.data.join("train.jsonl"))?, &vocab, &config)?;
    let valid_set = prepare_all(&read_jsonl(&args.data.join("valid.jsonl"))?, &vocab, &config)?;
    let mut model = build_model(&config, args.seed)?;
    log::info!("{run_id}: {} on {} examples, {} parameters", config.family, train_set.len(), model.store.iter().map(|(_, _, t)| t.data().len()).sum::<usize>());

    let start = Instant::now();
    let mut lines = Vec::new();
    let mut failure = None;
    train(&mut model, &train_set, &train_config, |m, e| {
        let mut line = LossLine { epoch: e.epoch, train_loss: e.mean_loss, train_perplexity: None, valid_perplexity: None };
        if e.epoch % args.eval_every == 0 || e.epoch == args.epochs {
            let measured = perplexity(m, &train_set).and_then(|t| {
                let v = if valid_set.is_empty() { None } else { Some(perplexity(m, &valid_set)?) };
                Ok((t, v))
            });
            match measured {
                Ok((t, v)) => {
                    line.train_perplexity = Some(t);
                    line.valid_perplexity = v;
                }
                Err(err) => failure = Some(err),
            }
        }
        log::info!(
            "epoch {}: loss {:.4}{}{} ({:.1}s)",
            e.epoch,
            e.mean_loss,
            line.train_perplexity.map(|p| format!(", train ppl {p:.3}")).unwrap_or_default(),
            line.valid_perplexity.map(|p| format!(", valid ppl {p:.3}")).unwrap_or_default(),
            start.elapsed().as_secs_f64()
        );
        let stop = matches!((args.stop_perplexity, line.train_perplexity), (Some(s), Some(p)) if p < s);
        lines.push(line);
        failure.is_none() && !stop
    })?;
    if let Some(err) = failure {
        return Err(err).context("measuring perplexity");
    }

    save_model(&model, &args.out.join(CHECKPOINT_FILE))?;
    write_jsonl(&args.out.join(LOSS_FILE), &lines)?;
    manifest.finish(&args.out, &[CHECKPOINT_FILE, LOSS_FILE])?;
    let last = lines.last().expect("at least one epoch");
    println!(
        "{run_id}: {} epochs, final loss {:.4}{}",
        lines.len(),
        last.train_loss,
        last.train_perplexity.map(|p| format!(", train perplexity {p:.4}")).unwrap_or_default()
    );
    Ok(())
}
