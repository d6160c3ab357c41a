//! `serve-anneval`: the human-evaluation service, optionally seeding a
//! study from generation runs first.

use std::collections::HashMap;
use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;

use anyhow::Context;
use laqg_anneval::{create_study, serve, CandidateItem, GenerationRun, Store, StudyConfig};
use laqg_core::Generation;
use laqg_data::{detokenize, Example};

use crate::args::ServeArgs;
use crate::commands::generate::GENERATIONS_FILE;
use crate::error::usage;
use crate::files::{must_exist, read_jsonl};
use crate::manifest::RunManifest;

/// One annotation candidate per generated question, with the answer text
/// read from the split the run decoded.
fn generation_run(dir: &std::path::Path) -> anyhow::Result<GenerationRun> {
    must_exist(dir, "generation run")?;
    let m = RunManifest::load_verified(dir, "generate")?;
    let model = m.model.as_ref().map(|c| c.family.to_string()).unwrap_or_else(|| m.run_id.clone());
    let data = m
        .inputs
        .get("data")
        .ok_or_else(|| usage(format!("{} does not record its data file", dir.display())))?;
    let examples = laqg_data::read_jsonl(std::path::Path::new(&data.path))?;
    let by_id: HashMap<&str, &Example> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let gens: Vec<Generation> = read_jsonl(&dir.join(GENERATIONS_FILE))?;
    let items = gens
        .iter()
        .map(|g| {
            let e = by_id
                .get(g.id.as_str())
                .ok_or_else(|| usage(format!("example {} is missing from {}", g.id, data.path)))?;
            Ok(CandidateItem {
                example_id: g.id.clone(),
                answer: detokenize(&e.answer),
                question: g.question.clone(),
                answer_sentences: e.answer_sentences,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(GenerationRun { model, items })
}

pub fn run(args: &ServeArgs) -> anyhow::Result<()> {
    let ip: IpAddr = args.host.parse().map_err(|_| usage(format!("--host {} is not an IP address", args.host)))?;
    if let Some(dir) = &args.static_dir {
        must_exist(dir, "static directory")?;
    }
    let store = Arc::new(Store::open(&args.data_dir)?);
    if let Some(id) = &args.study {
        if store.ids().contains(id) {
            log::info!("study {id} already exists; leaving it unchanged");
        } else {
            let runs: Vec<GenerationRun> = args.gen.iter().map(|d| generation_run(d)).collect::<anyhow::Result<_>>()?;
            let config = StudyConfig {
                n_items: args.n_items,
                min_annotators: args.min_annotators,
                seed: args.seed,
                ..StudyConfig::default()
            };
            let study = create_study(id, &runs, config)?;
            log::info!("created study {id} with {} items", study.items.len());
            store.insert(study)?;
        }
    }
    let addr = SocketAddr::new(ip, args.port);
    let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    rt.block_on(serve(store, addr, args.static_dir.clone()))
        .with_context(|| format!("serving on {addr}"))
}
