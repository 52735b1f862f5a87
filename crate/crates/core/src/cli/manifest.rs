use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

/// Record of one command run: what went in, what came out, and digests
/// that let a rerun be checked byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved configuration as sorted-key JSON.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub input_paths: Vec<String>,
    pub output_paths: Vec<String>,
    /// SHA-256 of each output file, keyed by its path.
    pub output_digests: BTreeMap<String, String>,
    /// SHA-256 over the sorted `(file name, digest)` pairs.
    pub summary_digest: String,
    pub tool_version: String,
    pub timestamp: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of any serializable configuration. Going through
/// `serde_json::Value` sorts object keys, so field order in the source file
/// does not matter.
pub fn config_digest<T: Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("configuration serializes");
    sha256_hex(&serde_json::to_vec(&value).expect("json value serializes"))
}

/// Summary over file names (not full paths) so that runs into different
/// directories compare equal.
pub fn summary_digest(digests: &BTreeMap<String, String>) -> String {
    let mut by_name: Vec<(String, &String)> = digests
        .iter()
        .map(|(path, d)| {
            let name = Path::new(path)
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.clone());
            (name, d)
        })
        .collect();
    by_name.sort();
    let mut text = String::new();
    for (name, d) in by_name {
        text.push_str(&format!("{d}  {name}\n"));
    }
    sha256_hex(text.as_bytes())
}

impl RunManifest {
    pub fn build<T: Serialize>(
        command: &str,
        config: &T,
        seed: Option<u64>,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<Self, CliError> {
        let mut output_digests = BTreeMap::new();
        for p in outputs {
            let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
            output_digests.insert(p.display().to_string(), sha256_hex(&bytes));
        }
        Ok(Self {
            command: command.to_string(),
            config_digest: config_digest(config),
            seed,
            input_paths: inputs.iter().map(|p| p.display().to_string()).collect(),
            output_paths: outputs.iter().map(|p| p.display().to_string()).collect(),
            summary_digest: summary_digest(&output_digests),
            output_digests,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}

/// `out.csv` becomes `out.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::SimulationConfig;

    #[test]
    fn digest_ignores_key_order() {
        let a = SimulationConfig::from_toml_str("seed = 5\nhome_prob = 0.2\n").unwrap();
        let b = SimulationConfig::from_toml_str("home_prob = 0.2\nseed = 5\n").unwrap();
        assert_eq!(config_digest(&a), config_digest(&b));
        let c = SimulationConfig::from_toml_str("home_prob = 0.2\nseed = 6\n").unwrap();
        assert_ne!(config_digest(&a), config_digest(&c));
    }

    #[test]
    fn summary_uses_file_names() {
        let mut a = BTreeMap::new();
        a.insert("/tmp/x/data.csv".to_string(), "00".to_string());
        let mut b = BTreeMap::new();
        b.insert("out/data.csv".to_string(), "00".to_string());
        assert_eq!(summary_digest(&a), summary_digest(&b));
    }

    #[test]
    fn manifest_names() {
        assert_eq!(manifest_path_for(Path::new("a/out.csv")), PathBuf::from("a/out.manifest.json"));
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
