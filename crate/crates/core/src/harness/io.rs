//! JSON/CSV reading and writing with a provenance block on every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::rmt::RNG_ALGORITHM;
use crate::error::Result;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Input path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub rng: &'static str,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            inputs: BTreeMap::new(),
            config: serde_json::Value::Null,
            rng: RNG_ALGORITHM,
        }
    }

    pub fn record(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = config;
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads and parses a JSON file, recording its hash.
pub fn read_json<T: DeserializeOwned>(path: &Path, prov: &mut Provenance) -> Result<T> {
    let text = read_text(path, prov)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_text(path: &Path, prov: &mut Provenance) -> Result<String> {
    let bytes = fs::read(path)?;
    prov.record(path, &bytes);
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `{..result, "provenance": ..}`.
pub fn write_json_with_provenance<T: Serialize>(path: &Path, result: &T, prov: &Provenance) -> Result<()> {
    let mut v = serde_json::to_value(result)?;
    let p = serde_json::to_value(prov)?;
    match &mut v {
        serde_json::Value::Object(map) => {
            map.insert("provenance".to_string(), p);
        }
        other => {
            let inner = std::mem::take(other);
            *other = serde_json::json!({ "result": inner, "provenance": p });
        }
    }
    fs::write(path, to_json_string(&v)?)?;
    Ok(())
}

/// `dir/stem<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// CSV body plus `<stem>.provenance.json` alongside it.
pub fn write_csv_with_provenance(path: &Path, csv: &str, prov: &Provenance) -> Result<()> {
    fs::write(path, csv)?;
    fs::write(sibling(path, ".provenance.json"), to_json_string(&serde_json::json!({ "provenance": prov }))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn json_round_trip_records_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.json");
        fs::write(&path, "[1, 2, 3]").unwrap();
        let mut prov = Provenance::new("test");
        let v: Vec<u32> = read_json(&path, &mut prov).unwrap();
        assert_eq!(v, [1, 2, 3]);
        assert_eq!(prov.inputs.len(), 1);
        let out = dir.path().join("out.json");
        write_json_with_provenance(&out, &serde_json::json!({"x": 1}), &prov).unwrap();
        let back: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(back["x"], 1);
        assert_eq!(back["provenance"]["rng"], "chacha20");
        assert_eq!(back["provenance"]["tool"], "opfree");
        write_json_with_provenance(&out, &vec![1.5], &prov).unwrap();
        let back: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(back["result"][0], 1.5);
    }

    #[test]
    fn csv_gets_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d.csv");
        write_csv_with_provenance(&out, "u,density,method\n", &Provenance::new("density")).unwrap();
        assert!(dir.path().join("d.provenance.json").exists());
        assert_eq!(sibling(&out, ".dat"), dir.path().join("d.dat"));
    }

    #[test]
    fn malformed_json_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{not json").unwrap();
        let r: Result<serde_json::Value> = read_json(&path, &mut Provenance::new("t"));
        assert!(r.is_err());
        let missing: Result<serde_json::Value> = read_json(&dir.path().join("nope.json"), &mut Provenance::new("t"));
        assert!(missing.is_err());
    }
}
