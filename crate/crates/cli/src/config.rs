//! Run configuration: a flat TOML file of `key = value` lines over the
//! built-in defaults, then `--set key=value` overrides, then dedicated flags.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use crlpm_core::pipeline::RunConfig;
use toml::{Table, Value};

use crate::Usage;

pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = Table::try_from(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Usage(format!("{}: {}", path.display(), e.message())))?;
        for (k, v) in user {
            set(&mut table, &k, v)?;
        }
    }
    for raw in overrides {
        let (k, v) = raw.split_once('=').ok_or_else(|| Usage(format!("--set expects key=value, got `{raw}`")))?;
        set(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    let cfg: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| Usage(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn set(table: &mut Table, key: &str, value: Value) -> Result<()> {
    if !table.contains_key(key) {
        return Err(anyhow!(Usage(format!("unknown config key `{key}`"))));
    }
    // unquoted dates parse as TOML datetimes; the config keeps them as text
    let value = match value {
        Value::Datetime(d) => Value::String(d.to_string()),
        v => v,
    };
    table.insert(key.to_string(), value);
    Ok(())
}

/// A bare override is read as a TOML value when it parses as one
/// (`0.99`, `true`, `[6, 12, 24]`) and as a string otherwise (`2021-01-01`).
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// The effective configuration as TOML, for logging.
pub fn render(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}
