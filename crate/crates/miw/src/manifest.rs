//! Run manifests written next to every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::io::{write_json, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Resolved parameter values, keyed by name.
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub version: String,
    pub precision: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, precision: &str) -> Self {
        Self {
            command: command.to_owned(),
            argv: std::env::args().collect(),
            parameters: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            precision: precision.to_owned(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn parameter(mut self, name: &str, value: impl Serialize) -> Self {
        let value = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.parameters.insert(name.to_owned(), value);
        self
    }

    /// `<dir>/<stem>.manifest.json` for an output `<dir>/<stem>.<ext>`.
    pub fn path_for(output: &Path) -> PathBuf {
        let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        output.with_file_name(format!("{stem}.manifest.json"))
    }

    /// Writes the manifest beside `output` and returns its path.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf, IoError> {
        let path = Self::path_for(output);
        write_json(&path, self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_path() {
        assert_eq!(
            RunManifest::path_for(Path::new("out/positions_N11.csv")),
            PathBuf::from("out/positions_N11.manifest.json")
        );
    }
}
