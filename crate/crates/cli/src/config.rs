//! Loading scenario files and applying command-line overrides.

use std::path::Path;

use damage_core::model::ScenarioSpec;
use damage_core::presets::scenario;
use sha2::{Digest, Sha256};

/// Parses a scenario file. Errors name the offending key path.
pub fn parse_spec(text: &str) -> Result<ScenarioSpec, String> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().trim().to_string();
        if path == "." || path.is_empty() {
            format!("malformed config: {msg}")
        } else {
            format!("malformed config at `{path}`: {msg}")
        }
    })
}

pub fn load_spec(path: &Path) -> Result<ScenarioSpec, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_spec(&text)
}

pub fn preset_spec(name: &str) -> Result<ScenarioSpec, String> {
    scenario(name).map_err(|e| e.to_string())
}

/// Scenario file text for a spec; [`parse_spec`] reads it back unchanged.
pub fn to_toml(spec: &ScenarioSpec) -> Result<String, String> {
    toml::to_string(spec).map_err(|e| e.to_string())
}

/// Applies `--tol-override key=value` entries.
pub fn apply_overrides(spec: &mut ScenarioSpec, overrides: &[String]) -> Result<(), String> {
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| format!("tolerance override `{o}` is not of the form KEY=VALUE"))?;
        let value: f64 = v.trim().parse().map_err(|_| format!("tolerance override `{o}` has a non-numeric value"))?;
        spec.tolerances.set(k.trim(), value).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Hex SHA-256 of the canonical JSON form of the final spec.
pub fn config_hash(spec: &ScenarioSpec) -> String {
    let json = serde_json::to_vec(spec).expect("scenario specs serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}
