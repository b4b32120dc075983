//! Experiment provenance: a manifest embedded in every emitted artifact,
//! keyed by a config hash that is stable under JSON key reordering.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
    /// Populated only with --timings; volatile fields are excluded from
    /// deterministic outputs.
    pub timestamp: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub output_paths: Vec<String>,
}

impl ExperimentManifest {
    pub fn new(subcommand: &str, config: &impl Serialize, master_seed: u64, with_timestamp: bool) -> Self {
        let value = serde_json::to_value(config).expect("config serializes");
        Self {
            subcommand: subcommand.to_string(),
            config_hash: canonical_hash(&value),
            master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: with_timestamp.then(|| {
                let now = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                format!("unix:{now}")
            }),
            output_paths: Vec::new(),
        }
    }

    /// Comment lines embedded at the top of CSV artifacts.
    pub fn csv_comments(&self) -> Vec<String> {
        vec![
            format!("subcommand={}", self.subcommand),
            format!("config_hash={}", self.config_hash),
            format!("master_seed={}", self.master_seed),
        ]
    }
}

/// SHA-256 over a canonical JSON encoding (object keys sorted recursively),
/// so key order in the input file does not change the hash.
pub fn canonical_hash(value: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical_string(value).as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn canonical_string(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys
                .into_iter()
                .map(|k| {
                    format!(
                        "{}:{}",
                        serde_json::to_string(k).unwrap(),
                        canonical_string(&map[k])
                    )
                })
                .collect();
            format!("{{{}}}", inner.join(","))
        }
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(canonical_string).collect();
            format!("[{}]", inner.join(","))
        }
        other => serde_json::to_string(other).unwrap(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn hash_is_stable_under_key_reordering() {
        let a: Value = serde_json::from_str(r#"{"x": 1, "y": {"a": true, "b": [1, 2]}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"y": {"b": [1, 2], "a": true}, "x": 1}"#).unwrap();
        assert_eq!(canonical_hash(&a), canonical_hash(&b));
        let c = json!({"x": 2, "y": {"a": true, "b": [1, 2]}});
        assert_ne!(canonical_hash(&a), canonical_hash(&c));
    }
}
