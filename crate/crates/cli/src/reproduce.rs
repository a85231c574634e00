//! Re-execution of a recorded run and bitwise comparison of its outputs.

use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::config::{Pipeline, Scenario};
use crate::output::{sha256_file, Manifest, Sink};
use crate::pipelines::{execute, CliError};

/// Outcome of a successful comparison.
#[derive(Debug)]
pub struct Reproduction {
    pub files: usize,
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Mismatch(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Mismatch(format!("{}: malformed manifest: {e}", path.display())))
}

/// Checks the recorded scenario against its hash, reruns it in `scratch` and compares
/// every recorded output with the file next to the manifest.
pub fn reproduce(manifest_path: &Path, scratch: &Path) -> Result<Reproduction, CliError> {
    let manifest = load_manifest(manifest_path)?;
    let scenario: Scenario = serde_json::from_value(manifest.scenario.clone())
        .map_err(|e| CliError::Mismatch(format!("recorded scenario does not parse: {e}")))?;
    let hash = scenario.hash();
    if hash != manifest.scenario_hash {
        return Err(CliError::Mismatch(format!(
            "scenario hash mismatch: manifest records {}, scenario hashes to {hash}",
            manifest.scenario_hash
        )));
    }
    let pipeline: Pipeline = serde_json::from_value(Value::String(manifest.pipeline.clone()))
        .map_err(|_| CliError::Mismatch(format!("unknown pipeline {:?}", manifest.pipeline)))?;
    scenario.validate(pipeline)?;

    let mut sink = Sink::create(scratch, &hash)?;
    execute(&scenario, pipeline, &mut sink)?;
    let rerun = sink.finish(&scenario, &manifest.pipeline, manifest.threads)?;

    let original_dir = manifest_path.parent().unwrap_or(Path::new("."));
    for (name, digest) in &manifest.outputs {
        let Some(new_digest) = rerun.outputs.get(name) else {
            return Err(CliError::Mismatch(format!(
                "{name}: not produced by the rerun"
            )));
        };
        if new_digest != digest {
            return Err(CliError::Mismatch(first_divergence(
                name,
                &original_dir.join(name),
                &scratch.join(name),
            )));
        }
        let original = original_dir.join(name);
        if original.exists() && sha256_file(&original)? != *digest {
            return Err(CliError::Mismatch(format!(
                "{name}: file on disk does not match the manifest digest"
            )));
        }
    }
    if let Some(extra) = rerun
        .outputs
        .keys()
        .find(|k| !manifest.outputs.contains_key(*k))
    {
        return Err(CliError::Mismatch(format!(
            "{extra}: produced by the rerun but not recorded"
        )));
    }
    Ok(Reproduction {
        files: manifest.outputs.len(),
    })
}

fn first_divergence(name: &str, original: &Path, rerun: &Path) -> String {
    let (Ok(a), Ok(b)) = (fs::read(original), fs::read(rerun)) else {
        return format!("{name}: digest differs");
    };
    let (a, b) = (String::from_utf8_lossy(&a), String::from_utf8_lossy(&b));
    let mut la = a.lines();
    let mut lb = b.lines();
    let mut line = 1;
    loop {
        match (la.next(), lb.next()) {
            (Some(x), Some(y)) if x == y => line += 1,
            (None, None) => return format!("{name}: digest differs"),
            (x, y) => {
                return format!(
                    "{name}:{line}: recorded {:?}, rerun {:?}",
                    x.unwrap_or("<eof>"),
                    y.unwrap_or("<eof>")
                )
            }
        }
    }
}
