//! `bin-report` and `compare`: length-binned views of evaluated runs.

use std::path::Path;

use laqg_metrics::{bin_results, compare_runs, BinScheme, MetricOptions, Run, COLUMNS};
use serde_json::json;

use crate::args::{BinReportArgs, BinningArgs, By, CompareArgs, Format};
use crate::commands::evaluate::{load_results, RESULTS_FILE};
use crate::error::usage;
use crate::files::{ensure_dir, write_json, write_text};
use crate::manifest::{resolve, RunManifest};

fn scheme(b: &BinningArgs) -> BinScheme {
    match b.by {
        By::Sentences => BinScheme::Sentences { cap: b.cap },
        By::Words => BinScheme::Words { width: b.width, bins: b.bins },
    }
}

fn options(m: Option<&RunManifest>) -> MetricOptions {
    m.and_then(|m| m.setting("metric_options"))
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default()
}

fn record_input(manifest: &mut RunManifest, role: &str, path: &Path, m: Option<&RunManifest>) -> anyhow::Result<()> {
    manifest.input(role, &resolve(path, RESULTS_FILE).0)?;
    if let Some(m) = m {
        manifest.upstream.insert(role.to_string(), m.run_id.clone());
    }
    Ok(())
}

/// Prints the chosen format and, with `--out`, writes all three plus a manifest.
fn emit(
    b: &BinningArgs,
    mut manifest: RunManifest,
    stem: &str,
    text: String,
    csv: String,
    json: serde_json::Value,
) -> anyhow::Result<()> {
    match b.format {
        Format::Text => print!("{text}"),
        Format::Csv => print!("{csv}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&json)?),
    }
    if let Some(out) = &b.out {
        ensure_dir(out)?;
        let names = [format!("{stem}.txt"), format!("{stem}.csv"), format!("{stem}.json")];
        write_text(&out.join(&names[0]), &text)?;
        write_text(&out.join(&names[1]), &csv)?;
        write_json(&out.join(&names[2]), &json)?;
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        manifest.finish(out, &refs)?;
    }
    Ok(())
}

pub fn bin_report(args: &BinReportArgs) -> anyhow::Result<()> {
    let (results, m, _) = load_results(&args.eval)?;
    let scheme = scheme(&args.binning);
    let opts = options(m.as_ref());
    let report = bin_results(&results, scheme, &opts)?;

    let mut manifest = RunManifest::new("bin-report");
    record_input(&mut manifest, "evaluation", &args.eval, m.as_ref())?;
    manifest.settings = json!({ "scheme": scheme, "metric_options": opts });
    let run_id = manifest.seal().to_string();
    let mut value = serde_json::to_value(&report)?;
    value["run_id"] = json!(run_id);
    emit(&args.binning, manifest, "binned", report.table(), report.csv(), value)
}

fn metric_index(name: &str) -> anyhow::Result<usize> {
    COLUMNS
        .iter()
        .position(|c| c.eq_ignore_ascii_case(name))
        .ok_or_else(|| usage(format!("unknown metric {name:?} (expected one of {})", COLUMNS.join(", "))))
}

pub fn compare(args: &CompareArgs) -> anyhow::Result<()> {
    let metric = args.metric.as_deref().map(metric_index).transpose()?;
    let (ra, ma, pa) = load_results(&args.a)?;
    let (rb, mb, pb) = load_results(&args.b)?;
    let name = |given: &Option<String>, report: Option<String>, fallback: &str| {
        given.clone().or(report).unwrap_or_else(|| fallback.to_string())
    };
    let mut name_a = name(&args.name_a, pa.and_then(|r| r.model), "A");
    let mut name_b = name(&args.name_b, pb.and_then(|r| r.model), "B");
    if name_a == name_b && args.name_a.is_none() && args.name_b.is_none() {
        name_a.push_str(" (A)");
        name_b.push_str(" (B)");
    }
    let scheme = scheme(&args.binning);
    let opts = options(ma.as_ref());
    if opts != options(mb.as_ref()) {
        log::warn!("the two runs were scored with different metric options; using run A's");
    }
    let a = Run { name: name_a, results: ra };
    let b = Run { name: name_b, results: rb };
    let cmp = compare_runs(&a, &b, scheme, &opts)?;

    let mut manifest = RunManifest::new("compare");
    record_input(&mut manifest, "a", &args.a, ma.as_ref())?;
    record_input(&mut manifest, "b", &args.b, mb.as_ref())?;
    manifest.settings = json!({ "scheme": scheme, "metric_options": opts, "names": [&a.name, &b.name] });
    let run_id = manifest.seal().to_string();
    let text = match metric {
        Some(i) => cmp.table(i),
        None => cmp.full_table(),
    };
    let mut value = serde_json::to_value(&cmp)?;
    value["run_id"] = json!(run_id);
    emit(&args.binning, manifest, "comparison", text, cmp.csv(), value)
}
