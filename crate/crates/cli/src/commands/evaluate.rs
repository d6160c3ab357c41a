//! `evaluate`: join generations to references by example id and score them.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use laqg_core::Generation;
use laqg_data::Example;
use laqg_metrics::{evaluate_corpus_with, MetricOptions, MetricReport, ScoredResult, FOOTER};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{EvaluateArgs, Split};
use crate::commands::generate::GENERATIONS_FILE;
use crate::commands::train::open_data;
use crate::error::{data, mismatch, usage};
use crate::files::{ensure_dir, must_exist, read_json, read_jsonl, write_json, write_jsonl, write_text};
use crate::manifest::{resolve, sha256_file, RunManifest};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    /// Model family of the generating run, when known.
    pub model: Option<String>,
    pub examples: usize,
    pub options: MetricOptions,
    pub metrics: MetricReport,
    pub note: String,
}

fn split_of(name: &str) -> Option<Split> {
    [Split::Train, Split::Valid, Split::Test].into_iter().find(|s| s.name() == name)
}

pub fn run(args: &EvaluateArgs) -> anyhow::Result<()> {
    must_exist(&args.gen, "generations")?;
    must_exist(&args.refs, "references")?;
    if !(args.rouge_beta > 0.0) {
        return Err(usage("--rouge-beta must be positive"));
    }
    let (gen_file, gen_dir) = resolve(&args.gen, GENERATIONS_FILE);
    let gen_manifest = match &gen_dir {
        Some(dir) => Some(RunManifest::load_verified(dir, "generate")?),
        None => {
            log::warn!("{} has no run manifest; provenance will be incomplete", gen_file.display());
            None
        }
    };

    let (refs_file, data_manifest): (PathBuf, Option<RunManifest>) = if args.refs.is_dir() {
        let (m, _) = open_data(&args.refs)?;
        let split = args
            .split
            .or_else(|| gen_manifest.as_ref().and_then(|g| g.setting("split")?.as_str().and_then(split_of)))
            .unwrap_or(Split::Test);
        (args.refs.join(split.file()), Some(m))
    } else {
        (args.refs.clone(), None)
    };
    if let Some(recorded) = gen_manifest.as_ref().and_then(|g| g.inputs.get("data")) {
        let actual = sha256_file(&refs_file)?;
        if actual != recorded.sha256 {
            return Err(mismatch(format!(
                "generations were decoded from {} (sha256 {}), but the references {} differ (sha256 {})",
                recorded.path,
                &recorded.sha256[..12],
                refs_file.display(),
                &actual[..12]
            )));
        }
    }

    let generations: Vec<Generation> = read_jsonl(&gen_file)?;
    let refs = read_jsonl_examples(&refs_file)?;
    let results = join(&generations, &refs)?;
    let opts = MetricOptions { bleu_smoothing: args.bleu_smoothing, rouge_beta: args.rouge_beta };
    let hyps: Vec<Vec<String>> = results.iter().map(|r| r.hypothesis.clone()).collect();
    let gold: Vec<Vec<String>> = results.iter().map(|r| r.reference.clone()).collect();
    let metrics = evaluate_corpus_with(&hyps, &gold, &opts)?;

    let model = gen_manifest.as_ref().and_then(|g| g.model.as_ref()).map(|c| c.family.to_string());
    let mut manifest = RunManifest::new("evaluate");
    manifest.input("generations", &gen_file)?;
    manifest.input("references", &refs_file)?;
    if let Some(g) = &gen_manifest {
        manifest.upstream.insert("generate".into(), g.run_id.clone());
    }
    if let Some(d) = &data_manifest {
        manifest.upstream.insert("data".into(), d.run_id.clone());
    }
    manifest.settings = json!({ "metric_options": opts, "model": model });
    let run_id = manifest.seal().to_string();

    let report = EvalReport {
        run_id: run_id.clone(),
        model,
        examples: results.len(),
        options: opts,
        metrics,
        note: FOOTER.to_string(),
    };
    let text = format!("{}\n{}\n", metrics.table(), FOOTER);
    ensure_dir(&args.out)?;
    write_jsonl(&args.out.join(RESULTS_FILE), &results)?;
    write_json(&args.out.join(REPORT_FILE), &report)?;
    write_text(&args.out.join(REPORT_TEXT_FILE), &text)?;
    manifest.finish(&args.out, &[RESULTS_FILE, REPORT_FILE, REPORT_TEXT_FILE])?;
    print!("{text}");
    Ok(())
}

fn read_jsonl_examples(path: &Path) -> anyhow::Result<Vec<Example>> {
    Ok(laqg_data::read_jsonl(path)?)
}

/// One scored result per generation, in generation order.
pub fn join(generations: &[Generation], refs: &[Example]) -> anyhow::Result<Vec<ScoredResult>> {
    let by_id: HashMap<&str, &Example> = refs.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut seen = HashSet::new();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(generations.len());
    for g in generations {
        if !seen.insert(g.id.as_str()) {
            return Err(data(format!("example {} is generated twice", g.id)));
        }
        match by_id.get(g.id.as_str()) {
            Some(r) => out.push(ScoredResult {
                id: g.id.clone(),
                hypothesis: g.question.split_whitespace().map(String::from).collect(),
                reference: r.question.clone(),
                answer_words: r.answer_words,
                answer_sentences: r.answer_sentences,
            }),
            None => missing.push(g.id.as_str()),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(5).copied().collect();
        return Err(data(format!(
            "{} generated ids have no reference (e.g. {})",
            missing.len(),
            shown.join(", ")
        )));
    }
    if out.len() < refs.len() {
        log::warn!("{} of {} references have no generation and are not scored", refs.len() - out.len(), refs.len());
    }
    Ok(out)
}

/// Results plus the generating model's name from an evaluation run
/// directory (or a bare results file).
pub fn load_results(path: &Path) -> anyhow::Result<(Vec<ScoredResult>, Option<RunManifest>, Option<EvalReport>)> {
    must_exist(path, "evaluation")?;
    let (file, dir) = resolve(path, RESULTS_FILE);
    let manifest = match &dir {
        Some(d) => Some(RunManifest::load_verified(d, "evaluate")?),
        None => None,
    };
    let report = match &dir {
        Some(d) if d.join(REPORT_FILE).is_file() => Some(read_json(&d.join(REPORT_FILE))?),
        _ => None,
    };
    Ok((read_jsonl(&file)?, manifest, report))
}
