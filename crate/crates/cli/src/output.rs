//! Artifact writers. Every file records the config hash and seed list: CSV
//! files in a leading `#` comment, JSON files as top-level fields.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub fn header_line(cfg: &RunConfig) -> String {
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    format!("# config_hash={} seeds={}\n", cfg.hash(), seeds.join(","))
}

/// Writes `rows` under `columns` with the provenance comment on top.
pub fn write_csv(cfg: &RunConfig, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
    let mut text = header_line(cfg);
    text.push_str(&columns.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let path = cfg.out.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Adds `config_hash` and `seeds` to `body` and writes it pretty-printed.
pub fn write_json(cfg: &RunConfig, name: &str, mut body: Value) -> Result<PathBuf, CliError> {
    body["config_hash"] = json!(cfg.hash());
    body["seeds"] = json!(cfg.seeds);
    let path = cfg.out.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&body).expect("json value serializes") + "\n")?;
    Ok(path)
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn announce(path: &Path) {
    println!("wrote {}", path.display());
}
