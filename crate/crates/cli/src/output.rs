//! Artifact directory layout: data files, `summary.json` and `manifest.json`.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::recipes::RecipeOutput;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

fn write_json(path: &Path, value: &Value) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)
}

/// Writes all artifacts and returns whether every check passed.
pub fn write_success(
    out: &Path,
    name: &str,
    config: &Value,
    reference: bool,
    result: &RecipeOutput,
) -> std::io::Result<bool> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for a in &result.artifacts {
        fs::write(out.join(&a.name), &a.bytes)?;
        files.push(json!({"file": a.name, "bytes": a.bytes.len()}));
    }
    write_json(&out.join("summary.json"), &result.summary)?;
    let pass = result.checks.iter().all(|c| c.pass);
    let manifest = json!({
        "run": name,
        "version": VERSION,
        "config": config,
        "reference_checks": reference,
        "outputs": files,
        "checks": result.checks,
        "status": if pass { "passed" } else { "checks_failed" },
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(pass)
}

/// Records a run that failed after its config was accepted.
pub fn write_failure(out: &Path, name: &str, config: &Value, error: &str) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let manifest = json!({
        "run": name,
        "version": VERSION,
        "config": config,
        "outputs": [],
        "checks": [],
        "status": "error",
        "error": error,
    });
    write_json(&out.join("manifest.json"), &manifest)
}
