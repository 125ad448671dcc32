//! Layered configuration: preset defaults, then a TOML file or a saved
//! manifest, then command-line flags.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Invalid user input; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Values read from `--config`.
#[derive(Debug, Default)]
pub struct FileConfig {
    /// Subcommand recorded in a manifest.
    pub command: Option<String>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub values: Map<String, Value>,
}

/// Loads a flat TOML file, or a `manifest.json` written by an earlier run.
pub fn load(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let mut root = if is_json {
        let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        match v {
            Value::Object(map) => map,
            _ => return Err(usage(format!("{}: expected a JSON object", path.display()))),
        }
    } else {
        let table: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        match serde_json::to_value(table)? {
            Value::Object(map) => map,
            _ => unreachable!("a TOML table serializes to an object"),
        }
    };

    let mut out = FileConfig::default();
    if is_json {
        out.command = root.get("command").and_then(Value::as_str).map(String::from);
        out.preset = root.get("preset").and_then(Value::as_str).map(String::from);
        out.seed = root.get("seed").and_then(Value::as_u64);
        match root.remove("config") {
            Some(Value::Object(cfg)) => out.values = cfg,
            _ => return Err(usage(format!("{}: manifest has no `config` object", path.display()))),
        }
    } else {
        if let Some(p) = root.remove("preset") {
            out.preset = Some(p.as_str().ok_or_else(|| usage("config key `preset` must be a string"))?.into());
        }
        out.values = root;
    }
    Ok(out)
}

/// Serializes only the flags that were given.
pub fn flag_values<T: Serialize>(flags: &T) -> Result<Map<String, Value>> {
    match serde_json::to_value(flags)? {
        Value::Object(map) => Ok(map),
        _ => Ok(Map::new()),
    }
}

/// A comma-separated flag or string value where the default is a list.
fn coerce(key: &str, default: &Value, value: Value) -> Result<Value> {
    let (Value::Array(items), Value::String(s)) = (default, &value) else {
        return Ok(value);
    };
    let numeric = items.first().is_some_and(Value::is_number);
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            if numeric {
                p.parse::<f64>()
                    .map(Value::from)
                    .map_err(|_| usage(format!("`{key}`: `{p}` is not a number")))
            } else {
                Ok(Value::String(p.to_string()))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(Value::Array)
}

/// Overlays `layers` onto `defaults` in order; unknown keys are rejected.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, layers: &[&Map<String, Value>]) -> Result<T> {
    let Value::Object(mut base) = serde_json::to_value(defaults)? else {
        unreachable!("configs serialize to objects")
    };
    for layer in layers {
        for (k, v) in layer.iter() {
            let Some(default) = base.get(k) else {
                let mut known: Vec<&str> = base.keys().map(String::as_str).collect();
                known.sort_unstable();
                return Err(usage(format!("unknown config key `{k}` (known: {})", known.join(", "))));
            };
            let v = coerce(k, default, v.clone())?;
            base.insert(k.clone(), v);
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| usage(format!("invalid configuration: {e}")))
}
