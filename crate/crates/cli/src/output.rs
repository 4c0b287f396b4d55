//! Run outputs: collected in memory, then written one file at a time with
//! write-to-temp and rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Named file contents produced by one run.
#[derive(Debug, Default)]
pub struct Outputs {
    files: BTreeMap<String, Vec<u8>>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    /// Builds a CSV from a header and rows of already formatted cells.
    pub fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = Vec<String>>) {
        let mut s = String::from(header);
        s.push('\n');
        for row in rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        self.add(name, s.into_bytes());
    }

    /// Rejects any CSV field that reads as a non-finite number.
    pub fn check_finite(&self) -> Result<(), CliError> {
        for (name, bytes) in &self.files {
            if !name.ends_with(".csv") {
                continue;
            }
            let text = String::from_utf8_lossy(bytes);
            let bad = text
                .lines()
                .skip(1)
                .flat_map(|l| l.split(','))
                .any(|f| f.parse::<f64>().is_ok_and(|x| !x.is_finite()));
            if bad {
                return Err(CliError::NonFinite { file: name.clone() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub parameters: BTreeMap<String, String>,
    pub version: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to `dir/name` through a temporary file in the same directory.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, &target).map_err(|e| CliError::io(&target, e))?;
    Ok(target)
}

/// Persists every output and then the manifest, which is written last.
pub fn persist(config: &ExperimentConfig, outputs: &Outputs, wall_time_seconds: f64) -> Result<RunManifest, CliError> {
    outputs.check_finite()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut records = Vec::new();
    for (name, bytes) in &outputs.files {
        write_atomic(dir, name, bytes)?;
        records.push(OutputRecord { file: name.clone(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
    }
    let manifest = RunManifest {
        experiment: config.experiment.name().to_string(),
        seed: config.seed,
        output_dir: dir.clone(),
        parameters: config.params.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds,
        outputs: records,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write_atomic(dir, "manifest.json", &json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn non_finite_fields_are_rejected() {
        let mut o = Outputs::default();
        o.csv("a.csv", "x,y", [vec!["1".into(), "2.5".into()]]);
        assert!(o.check_finite().is_ok());
        o.csv("b.csv", "x", [vec!["NaN".into()]]);
        assert!(o.check_finite().is_err());
        let mut o = Outputs::default();
        o.csv("c.csv", "x", [vec!["inf".into()]]);
        assert!(o.check_finite().is_err());
    }
}
