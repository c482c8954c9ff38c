//! JSON configs: a recipe preset overridden key by key.

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {message}")]
    Config {
        message: String,
        offending: Vec<String>,
    },
    #[error(transparent)]
    Run(#[from] din_restart::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            message: message.into(),
            offending: Vec::new(),
        }
    }
}

/// Parses a config document. Blank text, non-objects and `{}` are rejected.
pub fn parse_document(text: &str) -> Result<Map<String, Value>, CliError> {
    if text.trim().is_empty() {
        return Err(CliError::config("empty config"));
    }
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) if map.is_empty() => Err(CliError::config("empty config")),
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::config("config must be a JSON object")),
        Err(e) => Err(CliError::config(format!("invalid JSON: {e}"))),
    }
}

/// Overlays `overrides` on `preset`. Keys absent from the preset are errors,
/// all reported at once.
pub fn merge(preset: &Value, overrides: &Map<String, Value>) -> Result<Value, CliError> {
    let Value::Object(base) = preset else {
        return Err(CliError::config("preset is not an object"));
    };
    let mut offending: Vec<String> = overrides
        .keys()
        .filter(|k| k.as_str() != "recipe" && !base.contains_key(*k))
        .cloned()
        .collect();
    if !offending.is_empty() {
        offending.sort();
        return Err(CliError::Config {
            message: format!("unknown keys: {}", offending.join(", ")),
            offending,
        });
    }
    let mut merged = base.clone();
    for (k, v) in overrides {
        if k != "recipe" {
            merged.insert(k.clone(), v.clone());
        }
    }
    Ok(Value::Object(merged))
}

/// Deserializes a merged config, turning type errors into config errors.
pub fn typed<T: serde::de::DeserializeOwned>(value: &Value) -> Result<T, CliError> {
    serde_json::from_value(value.clone()).map_err(|e| CliError::config(e.to_string()))
}
