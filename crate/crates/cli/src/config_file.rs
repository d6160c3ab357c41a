//! `--config FILE`: a JSON object whose keys are flag names (`d_model` or
//! `d-model`). Keys may sit at the top level or under a subcommand name;
//! the subcommand section wins over the top level, and anything given on
//! the command line wins over both. Values become ordinary arguments, so
//! clap validates them exactly as if they had been typed.

use std::ffi::OsString;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::usage;

pub const SUBCOMMANDS: [&str; 7] = ["prepare-data", "train", "generate", "evaluate", "bin-report", "compare", "serve-anneval"];

fn config_path(args: &[OsString]) -> anyhow::Result<Option<OsString>> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned().map(Some).ok_or_else(|| usage("--config needs a file argument"));
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Ok(Some(p.into()));
        }
    }
    Ok(None)
}

fn present(args: &[OsString], flag: &str) -> bool {
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.strip_prefix(flag).is_some_and(|rest| rest.starts_with('='))
    })
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Appends flags from the config file that the command line leaves unset.
pub fn merge(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| usage(format!("cannot read config file {}: {e}", Path::new(&path).display())))?;
    let root: Map<String, Value> = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config file {} is not a JSON object: {e}", Path::new(&path).display())))?;
    let sub = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| SUBCOMMANDS.contains(&a.as_str()));

    let mut merged: Vec<(String, Value)> = Vec::new();
    let mut put = |k: &str, v: &Value| {
        let k = k.replace('_', "-");
        merged.retain(|(m, _)| *m != k);
        merged.push((k, v.clone()));
    };
    for (k, v) in &root {
        if !SUBCOMMANDS.contains(&k.as_str()) {
            put(k, v);
        }
    }
    if let Some(Value::Object(section)) = sub.as_deref().and_then(|s| root.get(s)) {
        for (k, v) in section {
            put(k, v);
        }
    }

    let mut out = args.clone();
    for (key, value) in merged {
        let flag = format!("--{key}");
        if key == "config" || present(&args, &flag) {
            continue;
        }
        match &value {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for item in items {
                    let s = scalar(item).ok_or_else(|| usage(format!("config key {key:?}: list items must be strings or numbers")))?;
                    out.push(flag.clone().into());
                    out.push(s.into());
                }
            }
            v => {
                let s = scalar(v).ok_or_else(|| usage(format!("config key {key:?}: unsupported value {v}")))?;
                out.push(flag.into());
                out.push(s.into());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<OsString> {
        s.split_whitespace().map(OsString::from).collect()
    }

    fn strings(v: Vec<OsString>) -> Vec<String> {
        v.into_iter().map(|a| a.into_string().unwrap()).collect()
    }

    #[test]
    fn command_line_wins_and_sections_override() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(
            &cfg,
            r#"{"epochs": 3, "seed": 9, "train": {"d_model": 16, "epochs": 4, "bidirectional": true, "tie_embeddings": false},
                "generate": {"beam": 2}}"#,
        )
        .unwrap();
        let a = args(&format!("laqg train --config {} --epochs 7 --seed=2", cfg.display()));
        let out = strings(merge(a.clone()).unwrap());
        assert_eq!(out[..a.len()], strings(a)[..]);
        let extra = &out[6..];
        assert!(!extra.contains(&"--epochs".to_string()) && !extra.contains(&"--seed".to_string()));
        assert!(extra.windows(2).any(|w| w == ["--d-model", "16"]));
        assert!(extra.contains(&"--bidirectional".to_string()));
        assert!(!extra.contains(&"--tie-embeddings".to_string()) && !extra.contains(&"--beam".to_string()));
    }

    #[test]
    fn no_config_is_a_no_op_and_bad_files_are_usage_errors() {
        let a = args("laqg evaluate --gen g --refs r --out o");
        assert_eq!(merge(a.clone()).unwrap(), a);
        let err = merge(args("laqg evaluate --config /nonexistent.json")).unwrap_err();
        assert_eq!(crate::error::exit_code(&err), crate::error::EXIT_USAGE);
    }
}
