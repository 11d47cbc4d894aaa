//! Loading the experiment config: TOML file, then `--set key=value`
//! overrides, then validation.

use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use graph_ttt::config::ExperimentConfig;
use sha2::{Digest, Sha256};

/// Bad input from the user: unreadable files, malformed config, bad flags.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// A verification found counterexamples.
#[derive(Debug)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Violation {}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<toml::Table>()
                .map_err(|e| InputError(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for kv in overrides {
        apply_override(&mut table, kv)?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| InputError(format!("config: {}", e.message())))?;
    cfg.validate().map_err(|e| InputError(e.to_string()))?;
    Ok(cfg)
}

/// Sets a dotted key; the value is read as a TOML literal and falls back
/// to a plain string (`--set dataset.name=DD`).
pub fn apply_override(table: &mut toml::Table, kv: &str) -> Result<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| InputError(format!("override '{kv}' is not of the form key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(InputError(format!("override key '{key}' is malformed")).into());
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| InputError(format!("override '{key}': '{p}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// SHA-256 over the canonical JSON form of the resolved config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}
