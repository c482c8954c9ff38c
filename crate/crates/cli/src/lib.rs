//! Experiment runner: recipes, single runs and their on-disk artifacts.

pub mod commands;
pub mod config;
pub mod output;
pub mod recipes;

use std::path::Path;

use serde_json::{Map, Value};

pub use config::CliError;
use recipes::RecipeOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    ChecksFailed,
}

/// Merges `overrides` over `preset`, runs `body` and writes the artifacts to `out`.
///
/// Config errors write nothing. Errors raised while running leave a manifest
/// with the failure record.
pub fn execute(
    name: &str,
    preset: &Value,
    overrides: &Map<String, Value>,
    out: &Path,
    body: impl FnOnce(&Value, bool) -> Result<RecipeOutput, CliError>,
) -> Result<Outcome, CliError> {
    let merged = config::merge(preset, overrides)?;
    let reference = &merged == preset;
    match body(&merged, reference) {
        Ok(result) => {
            let pass = output::write_success(out, name, &merged, reference, &result)?;
            Ok(if pass { Outcome::Passed } else { Outcome::ChecksFailed })
        }
        Err(e @ CliError::Config { .. }) => Err(e),
        Err(e) => {
            output::write_failure(out, name, &merged, &e.to_string())?;
            Err(e)
        }
    }
}

/// Runs a named recipe, optionally overridden by a JSON config document that
/// may also name the recipe.
pub fn run_experiment(recipe: Option<&str>, config_text: Option<&str>, out: &Path) -> Result<Outcome, CliError> {
    let overrides = match config_text {
        Some(text) => config::parse_document(text)?,
        None => Map::new(),
    };
    let named = match overrides.get("recipe") {
        None => None,
        Some(Value::String(s)) => Some(s.as_str()),
        Some(_) => return Err(CliError::config("'recipe' must be a string")),
    };
    let name = match (recipe, named) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::config(format!("recipe '{a}' conflicts with config recipe '{b}'")))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(CliError::config("no recipe named")),
    };
    let preset = recipes::preset(name).ok_or_else(|| {
        CliError::config(format!("unknown recipe '{name}'; available: {}", recipes::RECIPES.join(", ")))
    })?;
    execute(name, &preset, &overrides, out, |cfg, reference| recipes::run(name, cfg, reference))
}
