//! Shared helpers for the binary tests: process invocation, manifest
//! reading, and a minimal JSON schema checker for the shipped schemas.

// Each test target compiles this module separately and uses its own
// subset of the helpers.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

/// Command handle for the compiled binary.
pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_meanfield"))
}

/// Runs the binary with the given arguments and returns the raw output.
pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Exit code of a finished process, panicking on signals.
pub fn code(output: &Output) -> i32 {
    output.status.code().expect("no exit code")
}

/// Parses the one-line JSON error object printed to stderr.
pub fn stderr_json(output: &Output) -> Value {
    let text = String::from_utf8_lossy(&output.stderr);
    let line = text
        .lines()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON line on stderr: {text}"));
    serde_json::from_str(line).expect("stderr line parses as JSON")
}

/// Loads a JSON artifact from disk.
pub fn read_json(path: &Path) -> Value {
    let bytes = std::fs::read(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    serde_json::from_slice(&bytes)
        .unwrap_or_else(|e| panic!("{} is not JSON: {e}", path.display()))
}

/// Path of one of the schema files shipped with the crate.
pub fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(name)
}

fn type_matches(value: &Value, ty: &str) -> bool {
    match ty {
        "number" => value.is_number(),
        "integer" => {
            value.is_i64()
                || value.is_u64()
                || value.as_f64().is_some_and(|x| x.fract() == 0.0)
        }
        "string" => value.is_string(),
        "boolean" => value.is_boolean(),
        "array" => value.is_array(),
        "object" => value.is_object(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn check_value(value: &Value, schema: &Value, at: &str) -> Result<(), String> {
    if let Some(ty) = schema.get("type") {
        let allowed: Vec<&str> = match ty {
            Value::String(s) => vec![s.as_str()],
            Value::Array(list) => list.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        if !allowed.iter().any(|t| type_matches(value, t)) {
            return Err(format!(
                "{at}: expected type {allowed:?}, got {value}"
            ));
        }
    }
    if let Some(obj) = value.as_object() {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(key) {
                    return Err(format!("{at}: missing required key {key}"));
                }
            }
        }
        if let Some(props) = schema.get("properties").and_then(Value::as_object) {
            for (key, sub) in props {
                if let Some(child) = obj.get(key) {
                    check_value(child, sub, &format!("{at}.{key}"))?;
                }
            }
        }
    }
    if let (Some(list), Some(items)) = (value.as_array(), schema.get("items")) {
        for (i, el) in list.iter().enumerate() {
            check_value(el, items, &format!("{at}[{i}]"))?;
        }
    }
    Ok(())
}

/// Asserts that a JSON value conforms to one of the shipped schemas.
pub fn assert_matches_schema(value: &Value, schema_name: &str) {
    let schema = read_json(&schema_path(schema_name));
    if let Err(msg) = check_value(value, &schema, "$") {
        panic!("{schema_name}: {msg}");
    }
}

/// Reads the manifest of a run directory and returns its `outputs`
/// array as (file, sha256, bytes) tuples.
pub fn manifest_outputs(dir: &Path) -> Vec<(String, String, u64)> {
    let manifest = read_json(&dir.join("manifest.json"));
    assert_matches_schema(&manifest, "manifest.schema.json");
    manifest["outputs"]
        .as_array()
        .expect("outputs array")
        .iter()
        .map(|entry| {
            (
                entry["file"].as_str().expect("file name").to_string(),
                entry["sha256"].as_str().expect("digest").to_string(),
                entry["bytes"].as_u64().expect("size"),
            )
        })
        .collect()
}
