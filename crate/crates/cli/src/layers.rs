//! Configuration layering: preset < config file < command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use sim3d_core::config::RunConfig;
use toml::{Table, Value};

pub const DEFAULT_PRESET: &str = "desk";

/// Recursively merges `over` into `base`; non-table values replace.
pub fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Sets `section.key` (or a top-level `key`) in a table.
pub fn set(table: &mut Table, dotted: &str, value: Value) {
    let mut parts: Vec<&str> = dotted.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("config sections are tables");
    }
    cur.insert(last.to_string(), value);
}

pub fn preset_table(name: &str) -> Result<Table> {
    let cfg = RunConfig::preset(name)?;
    Ok(Table::try_from(&cfg)?)
}

pub fn read_file(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<Table>().map_err(|e| anyhow!(ConfigError(format!("{}: {e}", path.display()))))
}

/// Builds the effective configuration. The preset comes from `preset_flag`,
/// then the file's `preset` key, then [`DEFAULT_PRESET`].
pub fn resolve(preset_flag: Option<&str>, file: Option<&Path>, overrides: Vec<(&str, Value)>) -> Result<RunConfig> {
    let file_table = file.map(read_file).transpose()?;
    let from_file = file_table.as_ref().and_then(|t| t.get("preset")).and_then(Value::as_str);
    let preset = preset_flag.or(from_file).unwrap_or(DEFAULT_PRESET).to_string();
    let mut table = preset_table(&preset)?;
    if let Some(t) = file_table {
        merge(&mut table, t);
    }
    for (key, value) in overrides {
        set(&mut table, key, value);
    }
    table.insert("preset".into(), Value::String(preset));
    let cfg: RunConfig =
        Value::Table(table).try_into().map_err(|e: toml::de::Error| anyhow!(ConfigError(e.to_string())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn dump(cfg: &RunConfig) -> Result<String> {
    Ok(toml::to_string(cfg)?)
}

/// Malformed or inconsistent configuration input.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}
