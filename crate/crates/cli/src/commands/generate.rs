//! `generate`: decode one split with a trained checkpoint, examples in
//! parallel, output in split order.

use std::path::{Path, PathBuf};

use laqg_core::{generate_question, load_model, DecodeSettings, Generation};
use laqg_data::read_jsonl;
use rayon::prelude::*;
use serde_json::json;

use crate::args::GenerateArgs;
use crate::commands::prepare::VOCAB_FILE;
use crate::commands::train::{open_data, CHECKPOINT_FILE};
use crate::error::{mismatch, usage};
use crate::files::{ensure_dir, must_exist, write_jsonl};
use crate::manifest::RunManifest;

pub const GENERATIONS_FILE: &str = "generations.jsonl";

/// The checkpoint file and the training run directory holding it.
fn locate(path: &Path) -> anyhow::Result<(PathBuf, PathBuf)> {
    must_exist(path, "checkpoint")?;
    if path.is_dir() {
        Ok((path.join(CHECKPOINT_FILE), path.to_path_buf()))
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((path.to_path_buf(), dir))
    }
}

pub fn run(args: &GenerateArgs) -> anyhow::Result<()> {
    if args.beam == 0 {
        return Err(usage("--beam must be >= 1"));
    }
    let (ckpt, train_dir) = locate(&args.checkpoint)?;
    let train_manifest = RunManifest::load_verified(&train_dir, "train")?;
    let (data_manifest, vocab) = open_data(&args.data)?;
    if train_manifest.vocab_hash != data_manifest.vocab_hash {
        return Err(mismatch(format!(
            "checkpoint run {} was trained with vocabulary {} but {} has vocabulary {}; \
             decode with the data directory the model was trained on",
            train_manifest.run_id,
            train_manifest.vocab_hash.as_deref().map(|h| &h[..12]).unwrap_or("?"),
            args.data.display(),
            data_manifest.vocab_hash.as_deref().map(|h| &h[..12]).unwrap_or("?"),
        )));
    }
    let model = load_model(&ckpt)?;
    if model.config.vocab_size != vocab.len() {
        return Err(mismatch(format!(
            "checkpoint expects {} vocabulary entries, {} has {}",
            model.config.vocab_size,
            args.data.join(VOCAB_FILE).display(),
            vocab.len()
        )));
    }
    let settings = DecodeSettings { beam: args.beam, length_penalty: args.length_penalty };
    let split_file = args.data.join(args.split.file());

    let mut manifest = RunManifest::new("generate");
    manifest.input("checkpoint", &ckpt)?;
    manifest.input("data", &split_file)?;
    manifest.upstream.insert("train".into(), train_manifest.run_id.clone());
    manifest.upstream.insert("data".into(), data_manifest.run_id.clone());
    manifest.vocab_hash = data_manifest.vocab_hash.clone();
    manifest.model = Some(model.config.clone());
    manifest.decoding = Some(settings);
    manifest.settings = json!({ "split": args.split.name(), "limit": args.limit });
    let run_id = manifest.seal().to_string();

    let mut examples = read_jsonl(&split_file)?;
    if let Some(n) = args.limit {
        examples.truncate(n);
    }
    log::info!("{run_id}: decoding {} {} examples with beam {}", examples.len(), args.split.name(), args.beam);
    let generations: Vec<Generation> = examples
        .par_iter()
        .map(|e| generate_question(&model, &vocab, e, settings))
        .collect::<Result<_, _>>()?;

    ensure_dir(&args.out)?;
    write_jsonl(&args.out.join(GENERATIONS_FILE), &generations)?;
    manifest.finish(&args.out, &[GENERATIONS_FILE])?;
    println!("{run_id}: {} questions written to {}", generations.len(), args.out.join(GENERATIONS_FILE).display());
    Ok(())
}
