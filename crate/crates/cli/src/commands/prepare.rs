//! `prepare-data`: ingestion, secondary inputs, split, vocabulary, statistics.

use anyhow::Context;
use laqg_data::{
    attach_secondary, build_vocab, corpus_stats, ingest_nq, split, write_jsonl, CorpusStats, Example, IngestReport,
    SecondarySource,
};
use serde::Serialize;
use serde_json::json;

use crate::args::{PrepareArgs, Secondary, Source};
use crate::error::{data, usage};
use crate::files::{ensure_dir, must_exist, write_json};
use crate::manifest::RunManifest;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const STATS_FILE: &str = "stats.json";

#[derive(Serialize)]
struct Stats<'a> {
    run_id: &'a str,
    ingest: &'a IngestReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    dev_ingest: Option<&'a IngestReport>,
    retained: CorpusStats,
    train: CorpusStats,
    valid: CorpusStats,
    test: CorpusStats,
    /// `dev` when a dev file was carved as the test set, else `valid`.
    test_source: &'static str,
    summary_fallbacks: usize,
    vocab_size: usize,
}

fn transform(mut examples: Vec<Example>, args: &PrepareArgs) -> anyhow::Result<(Vec<Example>, usize)> {
    let source = match &args.secondary {
        Secondary::None => None,
        Secondary::FirstSentence => Some(SecondarySource::FirstSentence),
        Secondary::Summary(p) => {
            must_exist(p, "summary file")?;
            Some(SecondarySource::SummaryFile(p.clone()))
        }
    };
    let fallbacks = match &source {
        Some(s) => attach_secondary(&mut examples, s)?,
        None => 0,
    };
    if args.source == Source::SecondaryOnly {
        examples = examples
            .into_iter()
            .map(Example::with_secondary_as_source)
            .collect::<Result<_, _>>()?;
    }
    Ok((examples, fallbacks))
}

pub fn run(args: &PrepareArgs) -> anyhow::Result<()> {
    must_exist(&args.input, "input")?;
    if let Some(dev) = &args.dev {
        must_exist(dev, "dev file")?;
    }
    if args.source == Source::SecondaryOnly && args.secondary == Secondary::None {
        return Err(usage("--source secondary-only needs --secondary first-sentence or summary=FILE"));
    }
    if !(args.train_ratio > 0.0 && args.train_ratio < 1.0) {
        return Err(usage(format!("--train-ratio must lie in (0, 1), got {}", args.train_ratio)));
    }

    let mut manifest = RunManifest::new("prepare-data");
    manifest.input("nq", &args.input)?;
    if let Some(dev) = &args.dev {
        manifest.input("nq_dev", dev)?;
    }
    if let Secondary::Summary(p) = &args.secondary {
        manifest.input("summaries", p)?;
    }
    manifest.seeds.insert("split".into(), args.split_seed);
    manifest.settings = json!({
        "train_ratio": args.train_ratio,
        "secondary": match &args.secondary {
            Secondary::None => "none",
            Secondary::FirstSentence => "first-sentence",
            Secondary::Summary(_) => "summary",
        },
        "source": match args.source { Source::Answer => "answer", Source::SecondaryOnly => "secondary-only" },
        "vocab_size": args.vocab_size,
    });
    let run_id = manifest.seal().to_string();

    let (examples, ingest) = ingest_nq(&args.input).context("ingesting the input")?;
    log::info!(
        "{} records read, {} retained ({} malformed, {} without a long answer, {} not paragraphs)",
        ingest.records,
        ingest.retained,
        ingest.malformed,
        ingest.no_long_answer,
        ingest.not_paragraph
    );
    if examples.is_empty() {
        return Err(data(format!("no examples retained from {}", args.input.display())));
    }
    let (examples, mut fallbacks) = transform(examples, args)?;
    let (train, valid) = split(&examples, args.train_ratio, args.split_seed)?;
    let (test, dev_ingest, test_source) = match &args.dev {
        Some(dev) => {
            let (dev_examples, report) = ingest_nq(dev).context("ingesting the dev file")?;
            if dev_examples.is_empty() {
                return Err(data(format!("no examples retained from {}", dev.display())));
            }
            let (test, f) = transform(dev_examples, args)?;
            fallbacks += f;
            (test, Some(report), "dev")
        }
        None => {
            log::warn!("no --dev file: the test split repeats the validation split");
            (valid.clone(), None, "valid")
        }
    };
    if valid.is_empty() {
        log::warn!("the validation split is empty");
    }
    let vocab = build_vocab(&train, args.vocab_size)?;

    ensure_dir(&args.out)?;
    write_jsonl(&args.out.join("train.jsonl"), &train)?;
    write_jsonl(&args.out.join("valid.jsonl"), &valid)?;
    write_jsonl(&args.out.join("test.jsonl"), &test)?;
    vocab.save(&args.out.join(VOCAB_FILE))?;
    let stats_of = |xs: &[Example]| {
        corpus_stats(xs).unwrap_or(CorpusStats { example_count: 0, mean_sentences: 0.0, mean_words: 0.0 })
    };
    let stats = Stats {
        run_id: &run_id,
        ingest: &ingest,
        dev_ingest: dev_ingest.as_ref(),
        retained: stats_of(&examples),
        train: stats_of(&train),
        valid: stats_of(&valid),
        test: stats_of(&test),
        test_source,
        summary_fallbacks: fallbacks,
        vocab_size: vocab.len(),
    };
    write_json(&args.out.join(STATS_FILE), &stats)?;
    manifest.vocab_hash = Some(vocab.hash());
    manifest.finish(&args.out, &["train.jsonl", "valid.jsonl", "test.jsonl", VOCAB_FILE, STATS_FILE])?;
    println!(
        "{}: {} train / {} valid / {} test examples, vocabulary {} (mean {:.2} sentences, {:.2} words)",
        run_id,
        train.len(),
        valid.len(),
        test.len(),
        vocab.len(),
        stats.retained.mean_sentences,
        stats.retained.mean_words
    );
    Ok(())
}
