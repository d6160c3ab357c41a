//! The `laqg` binary driven end to end through its command line.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use laqg_core::synthetic::copy_task;
use laqg_data::nq::to_nq_line;
use serde_json::Value;

fn laqg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laqg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = laqg(args);
    assert!(
        out.status.success(),
        "laqg {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    laqg(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// An NQ-format corpus: copy-task paragraphs plus records the filter drops.
fn write_corpus(path: &Path, n: usize, seed: u64) {
    let mut lines: Vec<String> = copy_task(n, seed).unwrap().iter().map(to_nq_line).collect();
    lines.push(
        r#"{"example_id": "t1", "question_text": "what table", "document_text": "<Table> <Tr> x </Tr> </Table>", "annotations": [{"long_answer": {"start_token": 0, "end_token": 5}}]}"#.into(),
    );
    lines.push(
        r#"{"example_id": "n1", "question_text": "no answer", "document_text": "<P> x </P>", "annotations": [{"long_answer": {"start_token": -1, "end_token": -1}}]}"#.into(),
    );
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        write_corpus(&root.join("nq.jsonl"), 48, 3);
        write_corpus(&root.join("nq_dev.jsonl"), 12, 4);
        Fixture { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn prepare(&self, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.p(out);
        let (nq, dev) = (self.p("nq.jsonl"), self.p("nq_dev.jsonl"));
        let mut args = vec!["prepare-data", "--input", s(&nq), "--dev", s(&dev), "--out", s(&out), "--split-seed", "7"];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }

    fn train(&self, data: &Path, out: &str, family: &str) -> PathBuf {
        let out = self.p(out);
        let cfg = self.p("train.json");
        std::fs::write(
            &cfg,
            r#"{"train": {"enc_layers": 1, "dec_layers": 1, "d_model": 32, "heads": 2, "d_ffn": 64,
                          "dropout": 0.0, "max_tgt_len": 12, "batch_size": 8, "lr": 0.005, "epochs": 40,
                          "eval_every": 5, "stop_perplexity": 1.2}}"#,
        )
        .unwrap();
        ok(&["train", "--config", s(&cfg), "--data", s(data), "--out", s(&out), "--family", family, "--seed", "5"]);
        out
    }
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn toy_pipeline_end_to_end() {
    let start = Instant::now();
    let fx = Fixture::new();
    let data = fx.prepare("data", &[]);
    let stats = json(&data.join("stats.json"));
    assert_eq!(stats["ingest"]["records"], 50);
    assert_eq!(stats["ingest"]["retained"], 48);
    assert_eq!(stats["train"]["example_count"], 43);
    assert_eq!(stats["valid"]["example_count"], 5);
    assert_eq!(stats["test"]["example_count"], 12);
    assert_eq!(stats["test_source"], "dev");
    let data_manifest = json(&data.join("manifest.json"));
    assert_eq!(stats["run_id"], data_manifest["run_id"]);

    let run = fx.train(&data, "run", "lstm-copy");
    let manifest = json(&run.join("manifest.json"));
    assert_eq!(manifest["upstream"]["data"], data_manifest["run_id"]);
    assert_eq!(manifest["vocab_hash"], data_manifest["vocab_hash"]);
    assert_eq!(manifest["model"]["d_model"], 32, "config file values are applied");
    assert_eq!(manifest["training"]["seed"], 5);
    let log = lines(&run.join("loss.jsonl"));
    let last = log.last().unwrap();
    assert!(last["train_perplexity"].as_f64().unwrap() < 1.2, "{last}");

    let gen = fx.p("gen");
    ok(&["generate", "--checkpoint", s(&run), "--data", s(&data), "--beam", "2", "--out", s(&gen)]);
    let gens = lines(&gen.join("generations.jsonl"));
    assert_eq!(gens.len(), 12);

    let eval = fx.p("eval");
    let table = ok(&["evaluate", "--gen", s(&gen), "--refs", s(&data), "--out", s(&eval)]);
    assert!(table.contains("BLEU-4") && table.contains("ROUGE-L"), "{table}");
    let report = json(&eval.join("report.json"));
    assert_eq!(report["examples"], 12);
    assert_eq!(report["model"], "lstm-copy");
    assert!(report["metrics"]["rouge_l"].as_f64().unwrap() > 50.0, "{report}");

    let by_sent = ok(&["bin-report", "--eval", s(&eval), "--by", "sentences"]);
    for row in ["1", "2", "3", "4", "5", "6+"] {
        assert!(by_sent.lines().any(|l| l.trim_start().starts_with(row)), "{by_sent}");
    }
    let bins = fx.p("bins");
    let by_words = ok(&["bin-report", "--eval", s(&eval), "--by", "words", "--width", "10", "--out", s(&bins)]);
    assert!(by_words.contains("0-10") && by_words.contains("20-"), "{by_words}");
    let binned = json(&bins.join("binned.json"));
    let counted: u64 = binned["bins"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
    assert_eq!(counted, 12);
    assert_eq!(json(&bins.join("manifest.json"))["upstream"]["evaluation"], report["run_id"]);

    let cmp = fx.p("cmp");
    ok(&["compare", "--a", s(&eval), "--b", s(&eval), "--format", "json", "--out", s(&cmp)]);
    let c = json(&cmp.join("comparison.json"));
    for row in c["rows"].as_array().unwrap() {
        if let Some(delta) = row["delta"].as_object() {
            assert!(delta.values().all(|v| v.as_f64() == Some(0.0)), "{row}");
        }
    }
    let one = ok(&["compare", "--a", s(&eval), "--b", s(&eval), "--by", "words", "--metric", "bleu-4"]);
    assert!(one.contains("delta (BLEU-4)") && one.contains("100-"), "{one}");
    assert!(start.elapsed() < Duration::from_secs(300));
}

#[test]
fn reruns_are_bit_identical() {
    let fx = Fixture::new();
    let mut runs = Vec::new();
    for tag in ["a", "b"] {
        let data = fx.prepare(&format!("data-{tag}"), &["--secondary", "first-sentence"]);
        let run = fx.train(&data, &format!("run-{tag}"), "multi-source-transformer");
        let gen = fx.p(&format!("gen-{tag}"));
        ok(&["generate", "--checkpoint", s(&run), "--data", s(&data), "--beam", "3", "--out", s(&gen)]);
        runs.push([data, run, gen]);
    }
    for (x, y) in runs[0].iter().zip(&runs[1]) {
        let mx = json(&x.join("manifest.json"));
        let my = json(&y.join("manifest.json"));
        assert_eq!(mx["run_id"], my["run_id"]);
        assert_eq!(mx["outputs"], my["outputs"]);
        for name in mx["outputs"].as_object().unwrap().keys() {
            assert_eq!(std::fs::read(x.join(name)).unwrap(), std::fs::read(y.join(name)).unwrap(), "{name}");
        }
    }
}

#[test]
fn identity_generations_score_100() {
    let fx = Fixture::new();
    let data = fx.prepare("data", &[]);
    let gens: Vec<String> = lines(&data.join("test.jsonl"))
        .iter()
        .map(|e| serde_json::json!({"id": e["id"], "question": e["question"], "log_prob": 0.0}).to_string())
        .collect();
    let gen_file = fx.p("identity.jsonl");
    std::fs::write(&gen_file, gens.join("\n")).unwrap();
    let eval = fx.p("eval");
    ok(&["evaluate", "--gen", s(&gen_file), "--refs", s(&data.join("test.jsonl")), "--out", s(&eval)]);
    let m = json(&eval.join("report.json"))["metrics"].clone();
    for k in ["bleu1", "bleu2", "bleu3", "bleu4", "rouge_l"] {
        assert!((m[k].as_f64().unwrap() - 100.0).abs() < 1e-9, "{k}: {m}");
    }
}

#[test]
fn training_defaults_and_presets_are_recorded() {
    let fx = Fixture::new();
    let data = fx.prepare("data", &[]);
    let out = fx.p("defaults");
    ok(&["train", "--data", s(&data), "--out", s(&out), "--dry-run"]);
    let m = json(&out.join("manifest.json"));
    assert_eq!((m["model"]["enc_layers"].as_u64(), m["model"]["dec_layers"].as_u64()), (Some(5), Some(5)));
    assert_eq!(m["model"]["dropout"], 0.3);
    assert_eq!(m["training"]["adam"]["lr"], 0.0005);
    assert_eq!(m["training"]["adam"]["beta2"], 0.98);
    assert!(!out.join("model.ckpt").exists());

    let out = fx.p("iwslt");
    ok(&["train", "--data", s(&data), "--out", s(&out), "--arch", "iwslt_de_en", "--dry-run"]);
    let m = json(&out.join("manifest.json"));
    assert_eq!((m["model"]["enc_layers"].as_u64(), m["model"]["dec_layers"].as_u64()), (Some(6), Some(6)));
    assert_eq!(m["model"]["heads"], 16);
    assert_eq!(m["model"]["d_ffn"], 4096);
    assert_eq!(m["model"]["preset"], "iwslt_de_en");

    // config errors surface before any training
    let bad = fx.p("bad");
    assert_eq!(code(&["train", "--data", s(&data), "--out", s(&bad), "--d-model", "10", "--heads", "4"]), 1);
    assert!(!bad.join("model.ckpt").exists());
}

#[test]
fn secondary_only_swaps_the_source() {
    let fx = Fixture::new();
    let plain = fx.prepare("plain", &[]);
    let swapped = fx.prepare("swapped", &["--secondary", "first-sentence", "--source", "secondary-only"]);
    let a = lines(&plain.join("train.jsonl"));
    let b = lines(&swapped.join("train.jsonl"));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x["id"], y["id"]);
        assert_eq!(x["question"], y["question"]);
        assert_eq!(x["answer_words"], y["answer_words"]);
        let answer = x["answer"].as_str().unwrap();
        let first = y["answer"].as_str().unwrap();
        assert!(answer.starts_with(first) && first.len() < answer.len(), "{first:?} vs {answer:?}");
    }
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["train", "--help"]), 0);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["prepare-data", "--out", s(&fx.p("x"))]), 1, "missing --input");
    assert_eq!(code(&["prepare-data", "--input", s(&fx.p("missing.jsonl")), "--out", s(&fx.p("x"))]), 1);
    assert_eq!(code(&["train", "--data", s(&fx.p("nowhere")), "--out", s(&fx.p("y"))]), 1);

    // malformed content is a data error
    let garbage = fx.p("garbage.jsonl");
    std::fs::write(&garbage, "not json\n").unwrap();
    assert_eq!(code(&["prepare-data", "--input", s(&garbage), "--out", s(&fx.p("z"))]), 2);

    // a checkpoint trained on one vocabulary refuses another
    let data = fx.prepare("data", &[]);
    let other = fx.prepare("other", &["--vocab-size", "20"]);
    let run = fx.train(&data, "run", "lstm-attn");
    let out = laqg(&["generate", "--checkpoint", s(&run), "--data", s(&other), "--out", s(&fx.p("g"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary"), "{}", String::from_utf8_lossy(&out.stderr));

    // so does an artifact edited after the fact
    let vocab = data.join("vocab.txt");
    let mut text = std::fs::read_to_string(&vocab).unwrap();
    text.push_str("extra\n");
    std::fs::write(&vocab, text).unwrap();
    assert_eq!(code(&["generate", "--checkpoint", s(&run), "--data", s(&data), "--out", s(&fx.p("g2"))]), 2);
}

fn http_get(addr: &str, path: &str) -> String {
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut body = String::new();
    stream.read_to_string(&mut body).unwrap();
    body
}

#[test]
fn serve_anneval_seeds_a_study_and_answers() {
    let fx = Fixture::new();
    let data = fx.prepare("data", &[]);
    let mut gens = Vec::new();
    for family in ["lstm-attn", "lstm-copy"] {
        let run = fx.train(&data, &format!("run-{family}"), family);
        let gen = fx.p(&format!("gen-{family}"));
        ok(&["generate", "--checkpoint", s(&run), "--data", s(&data), "--beam", "1", "--out", s(&gen)]);
        gens.push(gen);
    }
    let ledgers = fx.p("ledgers");
    let web = fx.p("web");
    std::fs::create_dir_all(&web).unwrap();
    std::fs::write(web.join("index.html"), "<html>ui</html>").unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_laqg"))
        .args([
            "serve-anneval", "--port", "0", "--data-dir", s(&ledgers), "--static-dir", s(&web),
            "--study", "pilot", "--gen", s(&gens[0]), "--gen", s(&gens[1]), "--n-items", "6",
        ])
        .env("RUST_LOG", "info")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let stderr = child.stderr.take().unwrap();
    let mut addr = None;
    for line in BufReader::new(stderr).lines() {
        let line = line.unwrap();
        if let Some(rest) = line.split("http://").nth(1) {
            addr = Some(rest.trim().to_string());
            break;
        }
    }
    let addr = addr.expect("service announces its address");
    let studies = http_get(&addr, "/studies");
    let index = http_get(&addr, "/");
    let next = http_get(&addr, "/studies/pilot/next?annotator=nobody");
    child.kill().unwrap();
    let _ = child.wait();
    assert!(studies.starts_with("HTTP/1.1 200") && studies.contains(r#"{"studies":["pilot"]}"#), "{studies}");
    assert!(index.contains("<html>ui</html>"), "{index}");
    assert!(next.starts_with("HTTP/1.1 404"), "{next}");
    let ledger = std::fs::read_to_string(ledgers.join("pilot.jsonl")).unwrap();
    let study: Value = serde_json::from_str(ledger.lines().next().unwrap()).unwrap();
    let items = study["items"].as_array().unwrap();
    assert_eq!(items.len(), 6);
    let models: std::collections::BTreeSet<&str> = items.iter().map(|i| i["model"].as_str().unwrap()).collect();
    assert_eq!(models.len(), 2);
}
